//! Distances between the treated and untreated covariate distributions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::LinearScore;
use crate::sample::{union_support, EmpiricalCond};

/// Merged sorted support with both masses at each point.
fn merged_scalar(g1: &EmpiricalCond, g0: &EmpiricalCond) -> Result<Vec<(f64, f64, f64)>> {
    let a = g1.scalar_points()?;
    let b = g0.scalar_points()?;
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i].0.total_cmp(&b[j].0).is_le());
        let take_b = i >= a.len() || (j < b.len() && b[j].0.total_cmp(&a[i].0).is_le());
        let t = if take_a { a[i].0 } else { b[j].0 };
        let m1 = if take_a { a[i].1 } else { 0.0 };
        let m0 = if take_b { b[j].1 } else { 0.0 };
        if take_a {
            i += 1;
        }
        if take_b {
            j += 1;
        }
        out.push((t, m1, m0));
    }
    Ok(out)
}

/// sup_x |G¹(x) − G⁰(x)|.
pub fn ks_distance(g1: &EmpiricalCond, g0: &EmpiricalCond) -> Result<f64> {
    let (mut f1, mut f0, mut worst) = (0.0f64, 0.0f64, 0.0f64);
    for (_, m1, m0) in merged_scalar(g1, g0)? {
        f1 += m1;
        f0 += m0;
        worst = worst.max((f1 - f0).abs());
    }
    Ok(worst)
}

/// Wasserstein-1 distance as ∫|G¹ − G⁰|, which equals the optimal
/// transport cost between the two distributions on the line.
pub fn wasserstein1(g1: &EmpiricalCond, g0: &EmpiricalCond) -> Result<f64> {
    let pts = merged_scalar(g1, g0)?;
    let (mut f1, mut f0, mut acc) = (0.0, 0.0, 0.0);
    for w in pts.windows(2) {
        f1 += w[0].1;
        f0 += w[0].2;
        acc += (f1 - f0).abs() * (w[1].0 - w[0].0);
    }
    Ok(acc)
}

/// Σ |g¹ − g⁰| over the union support (counting measure; ranges over [0, 2]).
pub fn total_variation_l1(g1: &EmpiricalCond, g0: &EmpiricalCond) -> f64 {
    union_support(g1, g0)
        .iter()
        .map(|x| (g1.mass_at(x) - g0.mass_at(x)).abs())
        .sum()
}

/// ‖g¹/g⁰ − 1‖ in L²(G⁰), using the part of G¹ on the support of G⁰, and the
/// G¹ mass that falls outside that support.
pub fn density_ratio_l2(g1: &EmpiricalCond, g0: &EmpiricalCond) -> (f64, f64) {
    let mut acc = 0.0;
    let mut covered = 0.0;
    for a in g0.atoms() {
        let m1 = g1.mass_at(&a.location);
        covered += m1;
        let r = m1 / a.mass - 1.0;
        acc += a.mass * r * r;
    }
    (libm::sqrt(acc), (1.0 - covered).max(0.0))
}

/// Wasserstein sandwich for the Lévy–Prokhorov imbalance: (W1, 2√W1).
pub fn lp_sandwich(g1: &EmpiricalCond, g0: &EmpiricalCond) -> Result<(f64, f64)> {
    let w = wasserstein1(g1, g0)?;
    Ok((w, 2.0 * libm::sqrt(w)))
}

/// A scalar summary r_j of a support location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Constant,
    /// One coordinate of the location (0-based).
    Coordinate { index: usize },
    /// A linear score of the location.
    Score { score: LinearScore },
    /// Exact lookup table; every support point must be listed.
    Table { points: Vec<TablePoint> },
    /// min(−l(·,0), 0) for an affine model line l(·,0).
    ClippedNegativeModel { model: LinearScore },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePoint {
    pub location: Vec<f64>,
    pub value: f64,
}

impl Summary {
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            Summary::Constant => Some(1.0),
            Summary::Coordinate { index } => x.get(*index).copied(),
            Summary::Score { score } => score.eval(x).ok(),
            Summary::Table { points } => points.iter().find(|p| p.location.as_slice() == x).map(|p| p.value),
            Summary::ClippedNegativeModel { model } => model.eval(x).ok().map(|l| (-l).min(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub name: String,
    pub summary: Summary,
}

/// The summaries r(x) = (r_j(x))_j used by the mean-difference family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySet {
    pub items: Vec<NamedSummary>,
}

impl SummarySet {
    pub fn new(items: Vec<NamedSummary>) -> Self {
        SummarySet { items }
    }

    /// (1, x_1, …, x_p).
    pub fn constant_and_coordinates(p: usize) -> Self {
        let mut items = alloc::vec![NamedSummary { name: "const".into(), summary: Summary::Constant }];
        for j in 0..p {
            let name = if p == 1 { String::from("x") } else { format!("x{}", j + 1) };
            items.push(NamedSummary { name, summary: Summary::Coordinate { index: j } });
        }
        SummarySet { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.items.iter().map(|i| i.name.clone()).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.items
            .iter()
            .map(|it| {
                it.summary
                    .eval(x)
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Domain(format!("summary {} cannot be evaluated at {x:?}", it.name)))
            })
            .collect()
    }
}

/// |E_{G¹} r − E_{G⁰} r| componentwise.
pub fn mean_differences(g1: &EmpiricalCond, g0: &EmpiricalCond, rset: &SummarySet) -> Result<Vec<f64>> {
    Ok(signed_mean_differences(g1, g0, rset)?.into_iter().map(f64::abs).collect())
}

/// E_{G¹} r − E_{G⁰} r componentwise, sign kept.
pub fn signed_mean_differences(g1: &EmpiricalCond, g0: &EmpiricalCond, rset: &SummarySet) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; rset.len()];
    for (g, sign) in [(g1, 1.0), (g0, -1.0)] {
        for a in g.atoms() {
            for (o, v) in out.iter_mut().zip(rset.evaluate(&a.location)?) {
                *o += sign * a.mass * v;
            }
        }
    }
    Ok(out)
}

/// All imbalance metrics for one pair of distributions. One-dimensional
/// metrics are absent for vector locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceVector {
    pub ks: Option<f64>,
    pub w1: Option<f64>,
    pub tv: f64,
    pub dr: f64,
    pub dr_singular: f64,
    pub md: Option<Vec<f64>>,
    pub md_names: Vec<String>,
    pub lp: Option<[f64; 2]>,
}

impl ImbalanceVector {
    pub fn compute(g1: &EmpiricalCond, g0: &EmpiricalCond, rset: Option<&SummarySet>) -> Result<Self> {
        if g1.dim() != g0.dim() {
            return Err(Error::Dimension("arms have locations of different dimension".into()));
        }
        let scalar = g1.is_scalar();
        let (ks, w1, lp) = if scalar {
            let (lo, hi) = lp_sandwich(g1, g0)?;
            (Some(ks_distance(g1, g0)?), Some(lo), Some([lo, hi]))
        } else {
            (None, None, None)
        };
        let (dr, dr_singular) = density_ratio_l2(g1, g0);
        let md = match rset {
            Some(r) => Some(mean_differences(g1, g0, r)?),
            None => None,
        };
        Ok(ImbalanceVector {
            ks,
            w1,
            tv: total_variation_l1(g1, g0),
            dr,
            dr_singular,
            md,
            md_names: rset.map(SummarySet::names).unwrap_or_default(),
            lp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Arm;
    use alloc::vec;

    fn pm(arm: Arm, t: f64) -> EmpiricalCond {
        EmpiricalCond::point_mass(arm, vec![t])
    }

    #[test]
    fn translation_costs_the_shift() {
        assert_eq!(wasserstein1(&pm(Arm::Treated, 0.0), &pm(Arm::Untreated, 3.0)).unwrap(), 3.0);
    }

    #[test]
    fn identical_distributions_have_zero_imbalance() {
        let g = EmpiricalCond::from_scalars(Arm::Treated, &[(0.0, 1.0), (1.5, 2.0)]).unwrap();
        let mut h = g.clone();
        h = EmpiricalCond::from_scalars(Arm::Untreated, &h.scalar_points().unwrap()).unwrap();
        let v = ImbalanceVector::compute(&g, &h, Some(&SummarySet::constant_and_coordinates(1))).unwrap();
        assert_eq!((v.ks, v.w1, v.tv, v.dr, v.dr_singular), (Some(0.0), Some(0.0), 0.0, 0.0, 0.0));
        assert!(v.md.unwrap().iter().all(|d| d.abs() < 1e-15));
        assert_eq!(v.lp, Some([0.0, 0.0]));
    }

    #[test]
    fn disjoint_supports() {
        let a = pm(Arm::Treated, 0.0);
        let b = pm(Arm::Untreated, 1.0);
        assert_eq!(total_variation_l1(&a, &b), 2.0);
        assert_eq!(ks_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(density_ratio_l2(&a, &b), (1.0, 1.0));
    }

    #[test]
    fn density_ratio_is_directional() {
        let a = EmpiricalCond::from_scalars(Arm::Treated, &[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let b = EmpiricalCond::from_scalars(Arm::Untreated, &[(0.0, 0.9), (1.0, 0.1)]).unwrap();
        let (ab, _) = density_ratio_l2(&a, &b);
        let a0 = EmpiricalCond::from_scalars(Arm::Untreated, &[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let b1 = EmpiricalCond::from_scalars(Arm::Treated, &[(0.0, 0.9), (1.0, 0.1)]).unwrap();
        let (ba, _) = density_ratio_l2(&b1, &a0);
        assert!((ab - 4.0 / 3.0).abs() < 1e-12);
        assert!((ba - 0.8).abs() < 1e-12);
    }

    #[test]
    fn vector_locations_refuse_scalar_metrics() {
        let a = EmpiricalCond::point_mass(Arm::Treated, vec![0.0, 1.0]);
        let b = EmpiricalCond::point_mass(Arm::Untreated, vec![1.0, 1.0]);
        assert!(matches!(ks_distance(&a, &b), Err(Error::Dimension(_))));
        let v = ImbalanceVector::compute(&a, &b, None).unwrap();
        assert!(v.ks.is_none() && v.w1.is_none() && v.lp.is_none());
        assert_eq!(v.tv, 2.0);
    }

    #[test]
    fn summary_failure_names_the_summary() {
        let a = pm(Arm::Treated, 0.0);
        let b = pm(Arm::Untreated, 1.0);
        let r = SummarySet::new(vec![NamedSummary {
            name: "lookup".into(),
            summary: Summary::Table { points: vec![TablePoint { location: vec![0.0], value: 1.0 }] },
        }]);
        match mean_differences(&a, &b, &r) {
            Err(Error::Domain(msg)) => assert!(msg.contains("lookup") && msg.contains("1.0")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clipped_negative_model_summary() {
        let s = Summary::ClippedNegativeModel { model: LinearScore::new(-1.0, vec![2.0]) };
        assert_eq!(s.eval(&[0.0]), Some(0.0));
        assert_eq!(s.eval(&[2.0]), Some(-3.0));
    }
}
