use alloc::string::String;
use thiserror::Error;

/// Every failure the core can report. Variants split into input problems
/// (validation, domain, contract) and numerical ones (rank, degenerate,
/// solver) so front ends can map them to distinct exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no units")]
    NoUnits,
    #[error("validation: {0}")]
    Validation(String),
    #[error("empty arm: no units with d={0}")]
    EmptyArm(u8),
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("contract: {0}")]
    Contract(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("outcome missing: {0}")]
    MissingOutcome(String),
    #[error("rank deficient design: {0}")]
    Rank(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures caused by the numbers rather than the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Rank(_) | Error::Degenerate(_) | Error::Numerical(_))
    }
}

pub type Result<T> = core::result::Result<T, Error>;
