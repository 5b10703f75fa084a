//! Matched-pair variance estimation, robust intervals C_α(m), t statistics
//! and m-values.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::normal;
use crate::regression::RegressionFit;
use crate::sample::{Arm, Units};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// Δ̂: half the mean outer product of score differences between each
    /// unit and its nearest unit.
    pub delta_hat: Matrix,
    /// Γ⁻¹ Δ̂ Γ⁻¹.
    pub sigma_hat: Matrix,
    pub se_beta: f64,
    pub kappa: f64,
    /// Nearest unit l(i) for each unit i, as positions in unit order.
    pub pair_map: Vec<usize>,
}

/// Covariate diameter used to scale the arm penalty: exact for p = 1, the
/// bounding-box diagonal (an upper bound) otherwise.
pub fn covariate_diameter<U: Units + ?Sized>(s: &U) -> f64 {
    let p = s.p();
    let mut lo = alloc::vec![f64::INFINITY; p];
    let mut hi = alloc::vec![f64::NEG_INFINITY; p];
    for k in 0..s.len() {
        for (j, v) in s.unit(k).x.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    libm::sqrt(lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum())
}

/// Default penalty on crossing arms: large enough that every nearest unit
/// is found within the unit's own arm.
pub fn default_kappa<U: Units + ?Sized>(s: &U) -> f64 {
    let d = covariate_diameter(s);
    if d > 0.0 {
        1e6 * d
    } else {
        1e6
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Nearest unit within the same arm, ties to the lowest id; scalar
/// covariates use a sorted sweep.
fn within_arm_neighbours<U: Units + ?Sized>(s: &U, out: &mut [usize]) {
    for arm in Arm::BOTH {
        let mut idx: Vec<usize> = (0..s.len()).filter(|&k| s.unit(k).arm == arm).collect();
        if s.p() == 1 {
            let x = |k: usize| s.unit(k).x[0];
            idx.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then_with(|| s.unit(a).id.cmp(&s.unit(b).id)));
            // runs of equal x, each ordered by id
            let mut groups: Vec<&[usize]> = Vec::new();
            let mut start = 0;
            for k in 1..=idx.len() {
                if k == idx.len() || x(idx[k]) != x(idx[start]) {
                    groups.push(&idx[start..k]);
                    start = k;
                }
            }
            for (g, grp) in groups.iter().enumerate() {
                for &i in grp.iter() {
                    out[i] = if grp.len() >= 2 {
                        if grp[0] == i {
                            grp[1]
                        } else {
                            grp[0]
                        }
                    } else {
                        let left = g.checked_sub(1).map(|h| groups[h][0]);
                        let right = groups.get(g + 1).map(|r| r[0]);
                        match (left, right) {
                            (Some(l), Some(r)) => {
                                let dl = x(i) - x(l);
                                let dr = x(r) - x(i);
                                match dl.total_cmp(&dr) {
                                    Ordering::Less => l,
                                    Ordering::Greater => r,
                                    Ordering::Equal => {
                                        if s.unit(l).id <= s.unit(r).id {
                                            l
                                        } else {
                                            r
                                        }
                                    }
                                }
                            }
                            (Some(l), None) => l,
                            (None, Some(r)) => r,
                            (None, None) => unreachable!("arm has at least two units"),
                        }
                    };
                }
            }
        } else {
            for &i in &idx {
                let mut best: Option<(f64, usize)> = None;
                for &j in &idx {
                    if j == i {
                        continue;
                    }
                    let d = euclid(&s.unit(i).x, &s.unit(j).x);
                    let better = match best {
                        None => true,
                        Some((bd, bj)) => d < bd || (d == bd && s.unit(j).id < s.unit(bj).id),
                    };
                    if better {
                        best = Some((d, j));
                    }
                }
                out[i] = best.expect("arm has at least two units").1;
            }
        }
    }
}

/// Nearest unit under ψ(x, x') + κ |d − d'| over the whole sample.
fn penalized_neighbours<U: Units + ?Sized>(s: &U, kappa: f64, out: &mut [usize]) {
    for (i, o) in out.iter_mut().enumerate() {
        let ui = s.unit(i);
        let mut best: Option<(f64, usize)> = None;
        for j in 0..s.len() {
            if j == i {
                continue;
            }
            let uj = s.unit(j);
            let cost = euclid(&ui.x, &uj.x) + kappa * (ui.arm.indicator() - uj.arm.indicator()).abs();
            let better = match best {
                None => true,
                Some((bc, bj)) => cost < bc || (cost == bc && uj.id < s.unit(bj).id),
            };
            if better {
                best = Some((cost, j));
            }
        }
        *o = best.expect("sample has at least two units").1;
    }
}

/// Variance of the least squares coefficients from differences of score
/// terms Z_iÊ_i between each unit and its nearest unit. `kappa` defaults
/// to [`default_kappa`].
pub fn matched_pair_variance<U: Units + ?Sized>(
    s: &U,
    fit: &RegressionFit,
    kappa: Option<f64>,
) -> Result<VarianceEstimate> {
    let n = s.len();
    if fit.n != n || fit.design.rows() != n {
        return Err(Error::Contract(format!("fit covers {} units, sample has {n}", fit.n)));
    }
    for arm in Arm::BOTH {
        if s.arm_count(arm) < 2 {
            return Err(Error::Degenerate(format!(
                "no within-arm neighbor: arm d={} has fewer than two units",
                arm.code()
            )));
        }
    }
    let kappa = kappa.unwrap_or_else(|| default_kappa(s));
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Validation(format!("kappa must be finite and nonnegative, got {kappa}")));
    }
    let mut pair_map = alloc::vec![0usize; n];
    if kappa > covariate_diameter(s) {
        within_arm_neighbours(s, &mut pair_map);
    } else {
        penalized_neighbours(s, kappa, &mut pair_map);
    }
    let k = fit.theta.len();
    let score = |i: usize| -> Vec<f64> { fit.design.row(i).iter().map(|z| z * fit.residuals[i]).collect() };
    let mut delta = Matrix::zeros(k, k);
    for (i, &l) in pair_map.iter().enumerate() {
        let si = score(i);
        let sl = score(l);
        let d: Vec<f64> = si.iter().zip(&sl).map(|(a, b)| a - b).collect();
        for a in 0..k {
            for b in 0..=a {
                delta[(a, b)] += d[a] * d[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..=a {
            let v = delta[(a, b)] / (2.0 * n as f64);
            delta[(a, b)] = v;
            delta[(b, a)] = v;
        }
    }
    let ginv = linalg::spd_inverse(&fit.gram)?;
    let mut sigma = ginv.matmul(&delta)?.matmul(&ginv)?;
    for a in 0..k {
        for b in 0..a {
            let v = 0.5 * (sigma[(a, b)] + sigma[(b, a)]);
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    let se_beta = libm::sqrt(sigma[(1, 1)].max(0.0) / n as f64);
    Ok(VarianceEstimate { delta_hat: delta, sigma_hat: sigma, se_beta, kappa, pair_map })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidPoint {
    pub m: f64,
    pub lo: f64,
    pub hi: f64,
}

/// The interval C_α(m) = [β̂ − z_{1−α/2}·se − m·c, β̂ − z_{α/2}·se + m·c].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustCi {
    pub alpha: f64,
    pub beta_hat: f64,
    pub se: f64,
    pub c: f64,
}

impl RobustCi {
    pub fn new(beta_hat: f64, se: f64, c: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Validation(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(se >= 0.0 && se.is_finite()) {
            return Err(Error::Validation(format!("standard error must be finite and nonnegative, got {se}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Validation(format!("imbalance must be finite and nonnegative, got {c}")));
        }
        if !beta_hat.is_finite() {
            return Err(Error::Validation("estimate must be finite".into()));
        }
        Ok(RobustCi { alpha, beta_hat, se, c })
    }

    pub fn from_fit(fit: &RegressionFit, var: &VarianceEstimate, c: f64, alpha: f64) -> Result<Self> {
        Self::new(fit.beta(), var.se_beta, c, alpha)
    }

    /// (z_{α/2}, z_{1−α/2}).
    pub fn z(&self) -> (f64, f64) {
        (normal::quantile(self.alpha / 2.0), normal::quantile(1.0 - self.alpha / 2.0))
    }

    /// Closed interval at misspecification magnitude m ≥ 0.
    pub fn endpoints(&self, m: f64) -> [f64; 2] {
        let (zl, zh) = self.z();
        [
            self.beta_hat - zh * self.se - m * self.c,
            self.beta_hat - zl * self.se + m * self.c,
        ]
    }

    pub fn contains(&self, value: f64, m: f64) -> bool {
        let [lo, hi] = self.endpoints(m);
        lo <= value && value <= hi
    }

    pub fn trapezoid(&self, grid: &[f64]) -> Vec<TrapezoidPoint> {
        grid.iter()
            .map(|&m| {
                let [lo, hi] = self.endpoints(m);
                TrapezoidPoint { m, lo, hi }
            })
            .collect()
    }

    /// Smallest m at which C_α(m) reaches the null; 0 when C_α(0) already
    /// contains it and +∞ when c = 0 and it does not.
    pub fn m_value(&self, null_tau: f64) -> f64 {
        let [lo, hi] = self.endpoints(0.0);
        let gap = if null_tau < lo {
            lo - null_tau
        } else if null_tau > hi {
            null_tau - hi
        } else {
            return 0.0;
        };
        if self.c == 0.0 {
            f64::INFINITY
        } else {
            gap / self.c
        }
    }

    pub fn t_stat(&self, null_tau: f64) -> Result<f64> {
        if self.se == 0.0 {
            return Err(Error::Degenerate("standard error is zero".into()));
        }
        Ok((self.beta_hat - null_tau) / self.se)
    }
}

/// Evenly spaced grid 0, step, …, m_max.
pub fn m_grid(m_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|k| m_max * k as f64 / (points - 1) as f64).collect()
}

pub fn robust_ci(fit: &RegressionFit, var: &VarianceEstimate, c: f64, alpha: f64, m: f64) -> Result<[f64; 2]> {
    if !(m >= 0.0) {
        return Err(Error::Validation(format!("m must be nonnegative, got {m}")));
    }
    Ok(RobustCi::from_fit(fit, var, c, alpha)?.endpoints(m))
}

pub fn m_value(fit: &RegressionFit, var: &VarianceEstimate, c: f64, alpha: f64, null_tau: f64) -> Result<f64> {
    Ok(RobustCi::from_fit(fit, var, c, alpha)?.m_value(null_tau))
}

pub fn t_stat(fit: &RegressionFit, var: &VarianceEstimate, null_tau: f64) -> Result<f64> {
    if var.se_beta == 0.0 {
        return Err(Error::Degenerate("standard error is zero".into()));
    }
    Ok((fit.beta() - null_tau) / var.se_beta)
}
