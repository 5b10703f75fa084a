pub mod analyze;
pub mod oracle;
pub mod perturb;
pub mod simulate;
