//! Bias bounds for linear-regression treatment-effect estimands driven by
//! covariate imbalance, plus the design-phase and inference tooling around them.
//!
//! The crate is `no_std` with `alloc`. File formats, the CLI and the HTTP
//! service live in the `designbound` companion crate.
#![no_std]

extern crate alloc;

pub mod bounds;
pub mod design;
pub mod dgp;
pub mod error;
pub mod float_serde;
pub mod imbalance;
pub mod inference;
pub mod linalg;
pub mod misspec;
pub mod normal;
pub mod regression;
pub mod sample;
pub mod separation;

pub use error::{Error, Result};
