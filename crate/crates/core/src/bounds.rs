//! Bias bounds m·c per metric family, exact bias on finite populations and
//! the sustain/overturn verdict.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::ImbalanceVector;
use crate::misspec::MisspecVector;
use crate::regression::{att_parameter, conditional_estimand, ConditionalMean, CovariateMap, PopulationFit};
use crate::sample::{union_support, Arm, JointDist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundFamily {
    Ks,
    Mkw,
    Tv,
    Dr,
    Md,
    Lp,
}

impl BoundFamily {
    pub const ALL: [BoundFamily; 6] =
        [BoundFamily::Ks, BoundFamily::Mkw, BoundFamily::Tv, BoundFamily::Dr, BoundFamily::Md, BoundFamily::Lp];

    pub fn name(self) -> &'static str {
        match self {
            BoundFamily::Ks => "ks",
            BoundFamily::Mkw => "mkw",
            BoundFamily::Tv => "tv",
            BoundFamily::Dr => "dr",
            BoundFamily::Md => "md",
            BoundFamily::Lp => "lp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BoundFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown bound family {s}")))
    }
}

/// Imbalance in the shape its family uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "value", rename_all = "snake_case")]
pub enum CValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Interval([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "value", rename_all = "snake_case")]
pub enum MValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub dr_singular_term: f64,
    pub md_slack_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub family: BoundFamily,
    pub c: Option<CValue>,
    pub m: Option<MValue>,
    #[serde(default, with = "crate::float_serde::option")]
    pub bound: Option<f64>,
    /// Largest misspecification compatible with the target precision.
    #[serde(default, with = "crate::float_serde::option")]
    pub budget: Option<f64>,
    pub corrections: Corrections,
    /// True when the bound uses an upper end of a sandwich rather than c.
    pub conservative: bool,
    /// Why no bound was produced.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub exact_bias: Option<f64>,
}

impl BoundReport {
    pub fn entry(&self, family: BoundFamily) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.family == family)
    }

    pub fn bound(&self, family: BoundFamily) -> Option<f64> {
        self.entry(family).and_then(|e| e.bound)
    }
}

fn budget(eps: Option<f64>, c: f64) -> Option<f64> {
    eps.map(|e| if c > 0.0 { e / c } else { f64::INFINITY })
}

/// Combine imbalance and (optionally) misspecification into bounds.
/// Families whose inputs are missing carry a note instead of a bound.
pub fn assemble_bounds(c: &ImbalanceVector, m: Option<&MisspecVector>, eps: Option<f64>) -> BoundReport {
    let mut entries = Vec::with_capacity(6);
    for family in BoundFamily::ALL {
        let mut e = BoundEntry {
            family,
            c: None,
            m: None,
            bound: None,
            budget: None,
            corrections: Corrections::default(),
            conservative: family == BoundFamily::Lp,
            note: None,
        };
        let scalar_note = "needs a scalar index; reduce the covariates to an index first";
        match family {
            BoundFamily::Ks | BoundFamily::Mkw | BoundFamily::Tv | BoundFamily::Dr => {
                let cv = match family {
                    BoundFamily::Ks => c.ks,
                    BoundFamily::Mkw => c.w1,
                    BoundFamily::Tv => Some(c.tv),
                    _ => Some(c.dr),
                };
                let Some(cv) = cv else {
                    e.note = Some(scalar_note.into());
                    entries.push(e);
                    continue;
                };
                e.c = Some(CValue::Scalar(cv));
                e.budget = budget(eps, cv);
                if let Some(m) = m {
                    let mv = match family {
                        BoundFamily::Ks => m.m_ks,
                        BoundFamily::Mkw => m.m_lip,
                        BoundFamily::Tv => Some(m.m_sup),
                        _ => Some(m.m_l2_g0),
                    };
                    match mv {
                        Some(mv) => {
                            e.m = Some(MValue::Scalar(mv));
                            let mut b = mv * cv;
                            if family == BoundFamily::Dr {
                                e.corrections.dr_singular_term = m.dr_singular_term;
                                b += m.dr_singular_term;
                            }
                            e.bound = Some(b);
                        }
                        None => e.note = Some(scalar_note.into()),
                    }
                } else {
                    e.note = Some("no misspecification supplied".into());
                }
            }
            BoundFamily::Md => {
                let Some(cv) = c.md.clone() else {
                    e.note = Some("no summaries supplied".into());
                    entries.push(e);
                    continue;
                };
                e.budget = budget(eps, cv.iter().sum());
                match m.map(|m| (&m.m_md, m.md_slack)) {
                    Some((Some(mv), Some(slack))) if mv.len() == cv.len() => {
                        let b: f64 = mv.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>() + slack;
                        e.corrections.md_slack_term = slack;
                        e.m = Some(MValue::Vector(mv.clone()));
                        e.bound = Some(b);
                    }
                    Some((Some(_), _)) => e.note = Some("summaries of c and m differ".into()),
                    Some(_) => e.note = Some("separation program not solved".into()),
                    None => e.note = Some("no misspecification supplied".into()),
                }
                e.c = Some(CValue::Vector(cv));
            }
            BoundFamily::Lp => {
                let Some(lp) = c.lp else {
                    e.note = Some(scalar_note.into());
                    entries.push(e);
                    continue;
                };
                e.c = Some(CValue::Interval(lp));
                e.budget = budget(eps, lp[1]);
                match m {
                    Some(MisspecVector { m_lip: Some(lip), m_sup, .. }) => {
                        let mv = lip + m_sup;
                        e.m = Some(MValue::Scalar(mv));
                        e.bound = Some(mv * lp[1]);
                    }
                    Some(_) => e.note = Some(scalar_note.into()),
                    None => e.note = Some("no misspecification supplied".into()),
                }
            }
        }
        entries.push(e);
    }
    BoundReport { entries, exact_bias: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Sustained,
    Overturned,
}

/// A conclusion survives when the estimate sits farther from the null than
/// the largest bias the bound admits.
pub fn verdict(bound: f64, beta_hat: f64, null_tau: f64) -> Verdict {
    if (beta_hat - null_tau).abs() > bound {
        Verdict::Sustained
    } else {
        Verdict::Overturned
    }
}

/// Verdict for every family carrying a bound.
pub fn verdicts(report: &BoundReport, beta_hat: f64, null_tau: f64) -> Vec<(BoundFamily, Verdict)> {
    report
        .entries
        .iter()
        .filter_map(|e| e.bound.map(|b| (e.family, verdict(b, beta_hat, null_tau))))
        .collect()
}

/// β − τ computed both directly and through the inner product of the
/// misspecification with the density difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    pub fit: PopulationFit,
    pub beta: f64,
    pub tau: f64,
    pub bias: f64,
    pub bias_representation: f64,
    /// (location, f(x,0) − l(x,0)) on the union support.
    pub misspecification: Vec<(Vec<f64>, f64)>,
}

impl BiasDecomposition {
    pub fn h_at(&self, x: &[f64]) -> Result<f64> {
        self.misspecification
            .iter()
            .find(|(loc, _)| loc.as_slice() == x)
            .map(|p| p.1)
            .ok_or_else(|| Error::Domain(format!("{x:?} is outside the support")))
    }
}

/// Signed bias of the regression estimand for the treated effect on a
/// finite population, with the representation identity checked inline.
pub fn bias_exact<M: ConditionalMean + ?Sized>(outcome: &M, g: &JointDist, map: &CovariateMap) -> Result<BiasDecomposition> {
    let fit = conditional_estimand(outcome, g, map)?;
    let beta = fit.beta();
    let tau = att_parameter(outcome, &g.g1)?;
    let mut rep = 0.0;
    let mut scale = 1.0f64;
    let mut hs = Vec::new();
    for x in union_support(&g.g1, &g.g0) {
        let f0 = outcome.mean(&x, Arm::Untreated)?;
        let h = f0 - fit.predict(&x, Arm::Untreated)?;
        scale = scale.max(f0.abs());
        rep += h * (g.g1.mass_at(&x) - g.g0.mass_at(&x));
        hs.push((x, h));
    }
    let bias = beta - tau;
    if (bias - rep).abs() > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "bias identity violated: direct {bias:e} against representation {rep:e}"
        )));
    }
    Ok(BiasDecomposition { fit, beta, tau, bias, bias_representation: rep, misspecification: hs })
}
