//! Misspecification functions h = f(·,0) − l(·,0) and their magnitudes.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::SummarySet;
use crate::sample::{union_support, EmpiricalCond};
use crate::separation::{m_md, solve_separation_values, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub h: f64,
}

/// Piecewise-linear function of a scalar index through sorted knots,
/// constant beyond the outermost knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PerturbationWire", into = "PerturbationWire")]
pub struct Perturbation {
    knots: Vec<Knot>,
}

#[derive(Serialize, Deserialize)]
struct PerturbationWire {
    #[serde(default)]
    knots: Vec<Knot>,
}

impl TryFrom<PerturbationWire> for Perturbation {
    type Error = Error;
    fn try_from(w: PerturbationWire) -> Result<Self> {
        Perturbation::new(w.knots)
    }
}

impl From<Perturbation> for PerturbationWire {
    fn from(p: Perturbation) -> Self {
        PerturbationWire { knots: p.knots }
    }
}

impl Perturbation {
    /// Knots may arrive in any order; repeated t values are rejected.
    pub fn new(mut knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Validation("knots required".into()));
        }
        if knots.iter().any(|k| !(k.t.is_finite() && k.h.is_finite())) {
            return Err(Error::Validation("knot coordinates must be finite".into()));
        }
        knots.sort_by(|a, b| a.t.total_cmp(&b.t));
        if let Some(w) = knots.windows(2).find(|w| w[0].t == w[1].t) {
            return Err(Error::Validation(format!("two knots share t = {}", w[0].t)));
        }
        Ok(Perturbation { knots })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t, h)| Knot { t, h }).collect())
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].t {
            return k[0].h;
        }
        let last = k[k.len() - 1];
        if t >= last.t {
            return last.h;
        }
        let j = k.partition_point(|kn| kn.t <= t);
        let (a, b) = (k[j - 1], k[j]);
        if t == a.t {
            return a.h;
        }
        a.h + (b.h - a.h) * (t - a.t) / (b.t - a.t)
    }

    pub fn scaled(&self, factor: f64) -> Perturbation {
        Perturbation { knots: self.knots.iter().map(|k| Knot { t: k.t, h: factor * k.h }).collect() }
    }
}

/// Total variation through the knots: Σ |h(t_{k+1}) − h(t_k)|.
pub fn m_total_variation(h: &Perturbation) -> f64 {
    h.knots.windows(2).map(|w| (w[1].h - w[0].h).abs()).sum()
}

/// Lipschitz seminorm: the steepest slope between consecutive knots.
pub fn m_lipschitz(h: &Perturbation) -> f64 {
    h.knots
        .windows(2)
        .map(|w| (w[1].h - w[0].h).abs() / (w[1].t - w[0].t))
        .fold(0.0, f64::max)
}

/// Largest |h| over the knots, or over the given points when supplied.
pub fn m_sup(h: &Perturbation, support: Option<&[f64]>) -> f64 {
    match support {
        Some(pts) => pts.iter().map(|&t| h.eval(t).abs()).fold(0.0, f64::max),
        None => h.knots.iter().map(|k| k.h.abs()).fold(0.0, f64::max),
    }
}

/// ‖h‖ in L²(G⁰).
pub fn m_l2_g0(h: &Perturbation, g0: &EmpiricalCond) -> Result<f64> {
    let pts = g0.scalar_points()?;
    Ok(libm::sqrt(pts.iter().map(|&(t, m)| m * h.eval(t) * h.eval(t)).sum()))
}

/// Every misspecification magnitude for one h. One-dimensional families
/// are absent when h lives on vector locations; the mean-difference family
/// is absent without summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecVector {
    pub m_ks: Option<f64>,
    pub m_lip: Option<f64>,
    pub m_sup: f64,
    pub m_l2_g0: f64,
    pub m_md: Option<Vec<f64>>,
    /// Σ_σ Σ_d E_{G^d}[ξ], the slack correction of the mean-difference bound.
    pub md_slack: Option<f64>,
    /// Whether both separation problems were solved without slack.
    pub md_sharp: Option<bool>,
    /// |Σ h g¹| over treated support points the untreated arm never reaches.
    pub dr_singular_term: f64,
}

impl MisspecVector {
    /// Magnitudes of a sketched perturbation over the two supports.
    /// The sup-norm is taken over the union support of the two arms.
    pub fn from_perturbation(
        h: &Perturbation,
        g1: &EmpiricalCond,
        g0: &EmpiricalCond,
        rset: Option<&SummarySet>,
        penalty: f64,
    ) -> Result<Self> {
        g1.scalar_points()?;
        let support: Vec<f64> = union_support(g1, g0).into_iter().map(|x| x[0]).collect();
        let (m_md, md_slack, md_sharp) = md_part(|x| Ok(h.eval(x[0])), g1, g0, rset, penalty)?;
        Ok(MisspecVector {
            dr_singular_term: singular_term(&|x| Ok(h.eval(x[0])), g1, g0)?,
            m_ks: Some(m_total_variation(h)),
            m_lip: Some(m_lipschitz(h)),
            m_sup: m_sup(h, Some(&support)),
            m_l2_g0: m_l2_g0(h, g0)?,
            m_md,
            md_slack,
            md_sharp,
        })
    }

    /// Magnitudes of h known only at the support points (any dimension).
    /// For scalar supports the total variation and Lipschitz seminorm are
    /// those of the tabulation, which are the smallest over all extensions.
    pub fn from_values(
        h: &dyn Fn(&[f64]) -> Result<f64>,
        g1: &EmpiricalCond,
        g0: &EmpiricalCond,
        rset: Option<&SummarySet>,
        penalty: f64,
    ) -> Result<Self> {
        let support = union_support(g1, g0);
        let values = support.iter().map(|x| h(x)).collect::<Result<Vec<_>>>()?;
        let (m_ks, m_lip) = if g1.is_scalar() {
            let pairs: Vec<(f64, f64)> = support.iter().zip(&values).map(|(x, v)| (x[0], *v)).collect();
            let tab = Perturbation::from_pairs(&pairs)?;
            (Some(m_total_variation(&tab)), Some(m_lipschitz(&tab)))
        } else {
            (None, None)
        };
        let mut l2 = 0.0;
        for a in g0.atoms() {
            let v = h(&a.location)?;
            l2 += a.mass * v * v;
        }
        let (m_md, md_slack, md_sharp) = md_part(h, g1, g0, rset, penalty)?;
        Ok(MisspecVector {
            dr_singular_term: singular_term(h, g1, g0)?,
            m_ks,
            m_lip,
            m_sup: values.iter().map(|v| v.abs()).fold(0.0, f64::max),
            m_l2_g0: libm::sqrt(l2),
            m_md,
            md_slack,
            md_sharp,
        })
    }
}

fn singular_term(h: &dyn Fn(&[f64]) -> Result<f64>, g1: &EmpiricalCond, g0: &EmpiricalCond) -> Result<f64> {
    let mut acc = 0.0;
    for a in g1.atoms() {
        if g0.mass_at(&a.location) == 0.0 {
            acc += a.mass * h(&a.location)?;
        }
    }
    Ok(acc.abs())
}

type MdPart = (Option<Vec<f64>>, Option<f64>, Option<bool>);

fn md_part(
    h: impl Fn(&[f64]) -> Result<f64>,
    g1: &EmpiricalCond,
    g0: &EmpiricalCond,
    rset: Option<&SummarySet>,
    penalty: f64,
) -> Result<MdPart> {
    let Some(r) = rset else { return Ok((None, None, None)) };
    let plus = solve_separation_values(&h, r, g1, g0, Sign::Plus, penalty)?;
    let minus = solve_separation_values(&h, r, g1, g0, Sign::Minus, penalty)?;
    let (m, slack) = m_md(&plus, &minus, g1, g0)?;
    Ok((Some(m), Some(slack), Some(plus.sharp && minus.sharp)))
}
