use std::path::PathBuf;

use clap::Args;
use designbound_core::bounds::{assemble_bounds, verdict, BoundFamily, CValue, MValue, Verdict};
use designbound_core::misspec::{Knot, MisspecVector, Perturbation};
use serde::{Deserialize, Serialize};

use crate::error::{reason, CliError};
use crate::report::Report;

/// A sketched misspecification over the index plus the families to score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbRequest {
    #[serde(default)]
    pub knots: Vec<Knot>,
    /// Family names; all families when absent.
    #[serde(default)]
    pub families: Option<Vec<String>>,
    /// Overrides the report's null value.
    #[serde(default)]
    pub null_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyVerdict {
    pub family: BoundFamily,
    pub c: CValue,
    pub m: MValue,
    pub bound: f64,
    pub conservative: bool,
    /// Absent for design-only reports.
    pub verdict: Option<Verdict>,
    /// C_α(0) widened by the bound on each side.
    pub adjusted_ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unavailable {
    pub family: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbResponse {
    pub m: MisspecVector,
    pub classical_ci: Option<[f64; 2]>,
    pub null_tau: Option<f64>,
    pub families: Vec<FamilyVerdict>,
    pub unavailable: Vec<Unavailable>,
}

/// Why a request was refused; `kind` is machine-readable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub kind: String,
    pub error: String,
}

impl Rejection {
    fn from_core(e: &designbound_core::Error) -> Self {
        let kind = if e.is_numerical() { "numerical" } else { "validation" };
        Rejection { kind: kind.into(), error: reason(e) }
    }
}

/// Pure function of the report and the request.
pub fn perturb(report: &Report, req: &PerturbRequest) -> Result<PerturbResponse, Rejection> {
    let h = Perturbation::new(req.knots.clone()).map_err(|e| Rejection::from_core(&e))?;
    let mut wanted = Vec::new();
    let mut unavailable = Vec::new();
    match &req.families {
        None => wanted.extend(BoundFamily::ALL),
        Some(names) => {
            for name in names {
                match BoundFamily::parse(name) {
                    Ok(f) if !wanted.contains(&f) => wanted.push(f),
                    Ok(_) => {}
                    Err(_) => unavailable.push(Unavailable { family: name.clone(), reason: "unknown family".into() }),
                }
            }
        }
    }
    let idx = &report.index;
    let m = MisspecVector::from_perturbation(&h, &idx.g1, &idx.g0, idx.summaries.as_ref(), f64::INFINITY)
        .map_err(|e| Rejection::from_core(&e))?;
    let bounds = assemble_bounds(&report.imbalance.post, Some(&m), None);
    let inference = report.inference.as_ref();
    let null_tau = req.null_tau.or(inference.map(|i| i.null_tau));
    let mut families = Vec::new();
    for family in wanted {
        let entry = bounds.entry(family).expect("every family has an entry");
        match (&entry.c, &entry.m, entry.bound) {
            (Some(c), Some(mv), Some(bound)) => {
                let verdict = inference.zip(null_tau).map(|(i, t)| verdict(bound, i.beta_hat, t));
                let adjusted_ci = inference.map(|i| [i.classical_ci[0] - bound, i.classical_ci[1] + bound]);
                families.push(FamilyVerdict {
                    family,
                    c: c.clone(),
                    m: mv.clone(),
                    bound,
                    conservative: entry.conservative,
                    verdict,
                    adjusted_ci,
                });
            }
            _ => unavailable.push(Unavailable {
                family: family.name().into(),
                reason: entry.note.clone().unwrap_or_else(|| "no imbalance reported".into()),
            }),
        }
    }
    Ok(PerturbResponse { m, classical_ci: inference.map(|i| i.classical_ci), null_tau, families, unavailable })
}

/// Parse a request body; malformed JSON and invalid perturbations are both
/// rejections with a reason.
pub fn parse_request(body: &[u8]) -> Result<PerturbRequest, Rejection> {
    serde_json::from_slice(body).map_err(|e| Rejection { kind: "malformed".into(), error: e.to_string() })
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    /// Report JSON written by `analyze`.
    #[arg(long)]
    pub report: PathBuf,
    /// Perturbation JSON: {"knots": [{"t": .., "h": ..}, ..]}.
    #[arg(long)]
    pub perturbation: PathBuf,
    /// Families to score (ks, mkw, tv, dr, md, lp); all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    #[arg(long = "null")]
    pub null_tau: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &PerturbArgs) -> Result<PerturbResponse, CliError> {
    let report = Report::read(&args.report)?;
    let text = std::fs::read(&args.perturbation).map_err(|e| CliError::io(&args.perturbation, e))?;
    let mut req = parse_request(&text).map_err(|r| CliError::Input(format!("{}: {}", args.perturbation.display(), r.error)))?;
    if args.families.is_some() {
        req.families = args.families.clone();
    }
    if args.null_tau.is_some() {
        req.null_tau = args.null_tau;
    }
    let resp = perturb(&report, &req).map_err(|r| CliError::Input(format!("perturb: {}", r.error)))?;
    let json = serde_json::to_string_pretty(&resp).map_err(|e| CliError::Report(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))?,
        None => crate::error::print_stdout(&json)?,
    }
    Ok(resp)
}
