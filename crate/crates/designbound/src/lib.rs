//! File formats, report assembly, command implementations and the HTTP
//! service around `designbound-core`.

pub mod commands;
pub mod csv_io;
pub mod error;
pub mod report;
pub mod serve;

pub use error::CliError;
pub use report::Report;
