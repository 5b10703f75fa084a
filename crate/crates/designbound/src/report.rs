//! The report file: everything a reader needs to redo the bound arithmetic
//! for their own misspecification sketch, without the raw data.

use std::path::Path;

use designbound_core::bounds::{BoundFamily, BoundReport};
use designbound_core::design::BalanceTable;
use designbound_core::dgp::{SimPlan, SimSpec};
use designbound_core::dgp::simulation::SkippedReplication;
use designbound_core::float_serde;
use designbound_core::imbalance::SummarySet;
use designbound_core::inference::{RobustCi, TrapezoidPoint};
use designbound_core::regression::CovariateMap;
use designbound_core::sample::{EmpiricalCond, Provenance};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub meta: Meta,
    pub data: DataSummary,
    pub fits: Fits,
    pub design: DesignRecord,
    pub index: IndexRecord,
    pub imbalance: BalanceTable,
    /// Imbalance side of every bound family, evaluated on the analysis sample.
    pub bounds: BoundReport,
    pub inference: Option<Inference>,
    #[serde(default)]
    pub simulation: Option<SimulationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
    pub arguments: Vec<String>,
}

impl Meta {
    pub fn now(seed: Option<u64>, arguments: Vec<String>) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Meta { tool: "designbound".into(), version: env!("CARGO_PKG_VERSION").into(), seed, created_unix, arguments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_untreated: usize,
    pub covariates: Vec<String>,
    pub has_outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub map: CovariateMap,
    pub column_names: Vec<String>,
    /// (α, β, γ…)
    pub theta: Vec<f64>,
    pub n: usize,
    pub lambda_min: f64,
    pub se_beta: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub full: Option<FitSummary>,
    pub analysis: Option<FitSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMethod {
    None,
    NearestNeighbour,
    Listed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub method: DesignMethod,
    pub n_treated: usize,
    pub n_untreated: usize,
    pub member_ids: Vec<String>,
    pub provenance: Provenance,
}

/// The scalar index and both arms' distributions of it in the analysis
/// sample: enough to evaluate any perturbation's magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub map: CovariateMap,
    pub summaries: Option<SummarySet>,
    pub g1: EmpiricalCond,
    pub g0: EmpiricalCond,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyInference {
    pub family: BoundFamily,
    pub c: f64,
    #[serde(with = "float_serde")]
    pub m_value: f64,
    pub trapezoid: Vec<TrapezoidPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub alpha: f64,
    pub null_tau: f64,
    pub beta_hat: f64,
    pub se: f64,
    pub t_stat: Option<f64>,
    /// C_α(0), the classical interval.
    pub classical_ci: [f64; 2],
    pub families: Vec<FamilyInference>,
}

impl Inference {
    pub fn family(&self, family: BoundFamily) -> Option<&FamilyInference> {
        self.families.iter().find(|f| f.family == family)
    }

    pub fn interval(&self, c: f64, alpha: f64) -> designbound_core::Result<RobustCi> {
        RobustCi::new(self.beta_hat, self.se, c, alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub spec: SimSpec,
    pub rows: usize,
    pub improved_share: Option<f64>,
    pub median_abs_bias_pre: Option<f64>,
    pub median_abs_bias_post: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub plan: SimPlan,
    pub completed: usize,
    pub skipped: Vec<SkippedReplication>,
    pub specs: Vec<SpecSummary>,
}

fn finite(label: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Report(format!("{label} is not finite")))
    }
}

fn check_dist(label: &str, g: &EmpiricalCond) -> Result<(), CliError> {
    if !g.is_scalar() {
        return Err(CliError::Report(format!("{label} must live on a scalar index")));
    }
    if (g.total_mass() - 1.0).abs() > 1e-9 {
        return Err(CliError::Report(format!("{label} has total mass {}", g.total_mass())));
    }
    for a in g.atoms() {
        finite(label, a.location[0])?;
        if !(a.mass > 0.0) {
            return Err(CliError::Report(format!("{label} has a non-positive mass")));
        }
    }
    Ok(())
}

impl Report {
    /// Structural checks run before a report is written or served.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Report(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        check_dist("index.g1", &self.index.g1)?;
        check_dist("index.g0", &self.index.g0)?;
        if self.design.n_treated + self.design.n_untreated != self.design.member_ids.len() {
            return Err(CliError::Report("design member count disagrees with arm counts".into()));
        }
        for (tag, v) in [("pre", &self.imbalance.pre), ("post", &self.imbalance.post)] {
            for x in [v.ks, v.w1, Some(v.tv), Some(v.dr)].into_iter().flatten() {
                finite(&format!("imbalance.{tag}"), x)?;
            }
        }
        let mut seen = Vec::new();
        for e in &self.bounds.entries {
            if seen.contains(&e.family) {
                return Err(CliError::Report(format!("bound family {} listed twice", e.family.name())));
            }
            seen.push(e.family);
        }
        if let Some(inf) = &self.inference {
            if !(inf.alpha > 0.0 && inf.alpha < 1.0) {
                return Err(CliError::Report(format!("alpha {} outside (0,1)", inf.alpha)));
            }
            finite("inference.beta_hat", inf.beta_hat)?;
            finite("inference.se", inf.se)?;
            if inf.se < 0.0 {
                return Err(CliError::Report("negative standard error".into()));
            }
            for f in &inf.families {
                finite("inference c", f.c)?;
                if f.c < 0.0 {
                    return Err(CliError::Report(format!("negative imbalance for {}", f.family.name())));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Report, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Report(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Report, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let r = Report::from_json(&text).map_err(|e| CliError::Report(format!("{}: {e}", path.display())))?;
        r.validate()?;
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        self.validate()?;
        let json = self.to_json()?;
        std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
    }
}
