use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    /// A core routine failed; `module` names the stage that called it.
    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: designbound_core::Error,
    },
    #[error("input: {0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report: {0}")]
    Report(String),
}

impl CliError {
    /// 3 for numerical failures, 2 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

/// Attach a module label to a core result.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for designbound_core::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { module, source })
    }
}

/// The message of a core error without its category prefix.
pub fn reason(e: &designbound_core::Error) -> String {
    use designbound_core::Error as E;
    match e {
        E::Validation(s) | E::Dimension(s) | E::Domain(s) | E::Contract(s) | E::Capacity(s) => s.clone(),
        E::MissingOutcome(s) | E::Rank(s) | E::Degenerate(s) | E::Numerical(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Print to standard output, reporting a closed pipe as an error instead
/// of panicking.
pub fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").and_then(|_| out.flush()).map_err(|e| CliError::io("stdout", e))
}
