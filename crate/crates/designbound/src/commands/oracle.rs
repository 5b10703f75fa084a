use std::path::PathBuf;

use clap::{Args, Subcommand};
use designbound_core::dgp::{example1_oracle, example2_dataset};
use designbound_core::imbalance::{ImbalanceVector, SummarySet};
use designbound_core::misspec::MisspecVector;
use designbound_core::regression::{fit_ols, CovariateMap};
use designbound_core::sample::{JointDist, MatchedPair, Provenance, Units};
use serde::Serialize;

use crate::csv_io;
use crate::error::{CliError, InModule};

#[derive(Debug, Clone, Subcommand)]
pub enum OracleCommand {
    /// Closed forms of the binary toy model at treated share parameter p.
    Example1 {
        #[arg(long)]
        p: f64,
    },
    /// The 24-unit table sample and its stated matched subsample.
    Example2(Example2Args),
}

#[derive(Debug, Clone, Args)]
pub struct Example2Args {
    /// Write the sample as CSV (id, d, y, x).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the subsample ids, one per line.
    #[arg(long)]
    pub ids: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideValues {
    pub n: usize,
    pub beta: f64,
    pub imbalance: ImbalanceVector,
    /// Total variation of x − α̂ over the support.
    pub m_ks: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example2Values {
    pub full: SideValues,
    pub subsample: SideValues,
    pub pairs: Vec<MatchedPair>,
}

fn side<U: Units + ?Sized>(s: &U) -> designbound_core::Result<SideValues> {
    let g = JointDist::from_units(s, None)?;
    let rset = SummarySet::constant_and_coordinates(1);
    let fit = fit_ols(s, &CovariateMap::ConstantOnly)?;
    let alpha = fit.alpha();
    let m = MisspecVector::from_values(&|x: &[f64]| Ok(x[0] - alpha), &g.g1, &g.g0, None, f64::INFINITY)?;
    Ok(SideValues { n: s.len(), beta: fit.beta(), imbalance: ImbalanceVector::compute(&g.g1, &g.g0, Some(&rset))?, m_ks: m.m_ks })
}

pub fn example2_values() -> Result<Example2Values, CliError> {
    let e = example2_dataset().in_module("oracle")?;
    let sub = e
        .sample
        .redacted()
        .subsample_by_ids(&e.subsample_ids, Provenance::Listed { source: "stated pairs".into() })
        .in_module("oracle")?;
    Ok(Example2Values {
        full: side(&e.sample).in_module("oracle")?,
        subsample: side(&sub).in_module("oracle")?,
        pairs: e.pairs,
    })
}

pub fn run(cmd: &OracleCommand) -> Result<String, CliError> {
    let json = match cmd {
        OracleCommand::Example1 { p } => serde_json::to_string_pretty(&example1_oracle(*p).in_module("oracle")?),
        OracleCommand::Example2(args) => {
            if let Some(path) = &args.csv {
                let e = example2_dataset().in_module("oracle")?;
                let file = std::fs::File::create(path).map_err(|err| CliError::io(path, err))?;
                csv_io::write_sample(file, &e.sample, &["x".to_string()]).map_err(|err| CliError::Input(err.to_string()))?;
            }
            if let Some(path) = &args.ids {
                let e = example2_dataset().in_module("oracle")?;
                std::fs::write(path, e.subsample_ids.join("\n") + "\n").map_err(|err| CliError::io(path, err))?;
            }
            serde_json::to_string_pretty(&example2_values()?)
        }
    };
    json.map_err(|e| CliError::Report(e.to_string()))
}
