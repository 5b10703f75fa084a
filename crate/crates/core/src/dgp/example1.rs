//! Binary covariate toy model: X, D ∈ {0, 1} with
//! P(D = d, X = x) = 1/2 − p when d = x and p otherwise, and
//! f(x, d) = d + dx + x. At p = 1/4 the covariate is independent of
//! treatment and every bias vanishes.

use alloc::format;
use alloc::vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{DgpSpec, OutcomeTable};
use crate::sample::{Arm, JointDist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    p: f64,
}

impl Example1Params {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::Validation(format!("p must lie in (0, 1/2), got {p}")));
        }
        Ok(Example1Params { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

pub fn outcome(x: f64, d: f64) -> f64 {
    d + d * x + x
}

/// Closed forms for the two working models: A regresses on (1, D) and B
/// on (1, D, X).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Oracle {
    pub p: f64,
    pub tau: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub bias_a: f64,
    pub bias_b: f64,
    pub c_ks: f64,
    pub c_w1: f64,
    pub c_tv: f64,
    pub c_dr: f64,
    /// Mean differences of the summaries (1, x).
    pub c_md: [f64; 2],
    pub m_ks_a: f64,
    pub m_ks_b: f64,
    pub m_mkw_a: f64,
    pub m_mkw_b: f64,
    pub m_tv_a: f64,
    pub m_tv_b: f64,
    pub m_dr_a: f64,
    pub m_dr_b: f64,
    /// Separating coefficients on (1, x), identical for both signs.
    pub zeta_a: [f64; 2],
    pub zeta_b: [f64; 2],
    pub m_md_a: [f64; 2],
    pub m_md_b: [f64; 2],
    pub dgp: DgpSpec,
}

pub fn example1_dgp(params: Example1Params) -> Result<DgpSpec> {
    let p = params.p;
    let joint = JointDist::from_atoms(vec![
        (vec![0.0], Arm::Untreated, 0.5 - p),
        (vec![1.0], Arm::Untreated, p),
        (vec![0.0], Arm::Treated, p),
        (vec![1.0], Arm::Treated, 0.5 - p),
    ])?;
    let table = OutcomeTable::tabulate(&joint, |x, arm| outcome(x[0], arm.indicator()))?;
    DgpSpec::new(joint, table)
}

pub fn example1_oracle(p: f64) -> Result<Example1Oracle> {
    let params = Example1Params::new(p)?;
    let gap = (1.0 - 4.0 * p).abs();
    let spread = libm::sqrt(2.0 * p * (1.0 - 2.0 * p));
    Ok(Example1Oracle {
        p,
        tau: 2.0 - 2.0 * p,
        beta_a: 3.0 - 6.0 * p,
        beta_b: 1.5,
        bias_a: 1.0 - 4.0 * p,
        bias_b: -0.5 + 2.0 * p,
        c_ks: gap,
        c_w1: gap,
        c_tv: 2.0 * gap,
        c_dr: gap / spread,
        c_md: [0.0, gap],
        m_ks_a: 1.0,
        m_ks_b: 0.5,
        m_mkw_a: 1.0,
        m_mkw_b: 0.5,
        m_tv_a: f64::max(2.0 * p, 1.0 - 2.0 * p),
        m_tv_b: f64::max(p, 0.5 - p),
        m_dr_a: spread,
        m_dr_b: libm::sqrt(p * (0.5 - p)),
        zeta_a: [-2.0 * p, 1.0],
        zeta_b: [p, -0.5],
        m_md_a: [2.0 * p, 1.0],
        m_md_b: [p, 0.5],
        dgp: example1_dgp(params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_open() {
        for p in [0.0, 0.5, -0.1, f64::NAN] {
            assert!(example1_oracle(p).is_err());
        }
        assert!(example1_oracle(0.49).is_ok());
    }

    #[test]
    fn independence_point() {
        let o = example1_oracle(0.25).unwrap();
        assert_eq!((o.bias_a, o.bias_b, o.c_ks, o.c_tv, o.c_dr), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn joint_masses() {
        let d = example1_dgp(Example1Params::new(0.1).unwrap()).unwrap();
        assert!((d.joint.p_treated - 0.5).abs() < 1e-15);
        assert!((d.joint.g1.mass_at(&[1.0]) - 0.8).abs() < 1e-15);
        assert!((d.joint.g0.mass_at(&[0.0]) - 0.8).abs() < 1e-15);
    }
}
