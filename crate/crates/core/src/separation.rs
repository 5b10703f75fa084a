//! The separation program behind the mean-difference bound.
//!
//! For a sign σ the program is
//!
//! ```text
//! minimize ‖ζ‖² + L Σ ξ
//!   σ h(x) ≤ σ r(x)'ζ + ξ¹(x)   on the treated support
//!   σ h(x) ≥ σ r(x)'ζ − ξ⁰(x)   on the untreated support
//!   ξ ≥ 0
//! ```
//!
//! Every constraint has the form b'ζ + ξ ≥ a, so for any ζ the smallest
//! feasible slack is max(0, a − b'ζ). All solvers below therefore only
//! produce ζ; slacks are derived from it, which makes the returned point
//! feasible by construction. Only optimality is approximate.
//!
//! * finite L: coordinate descent on the dual box QP
//!   min ¼ λ'BB'λ − a'λ over 0 ≤ λ ≤ L, with ζ = ½ B'λ.
//! * L = ∞: a simplex pass minimizes total slack; when it is zero, a primal
//!   active-set method finds the minimum-norm ζ meeting every constraint.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::SummarySet;
use crate::linalg::{self, Matrix};
use crate::misspec::Perturbation;
use crate::sample::EmpiricalCond;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSolution {
    pub sigma: Sign,
    pub zeta: Vec<f64>,
    pub support1: Vec<Vec<f64>>,
    pub slacks1: Vec<f64>,
    pub support0: Vec<Vec<f64>>,
    pub slacks0: Vec<f64>,
    pub penalty: f64,
    /// ‖ζ‖² + L Σ ξ; for L = ∞ this is ‖ζ‖² when no slack was needed and
    /// infinite otherwise.
    pub objective: f64,
    pub total_slack: f64,
    /// Largest violation of a constraint by the returned point.
    pub max_residual: f64,
    pub feasible: bool,
    /// True when every slack is zero.
    pub sharp: bool,
}

/// Separation for a sketched scalar perturbation.
pub fn solve_separation(
    h: &Perturbation,
    rset: &SummarySet,
    g1: &EmpiricalCond,
    g0: &EmpiricalCond,
    sigma: Sign,
    penalty: f64,
) -> Result<SeparationSolution> {
    g1.scalar_points()?;
    g0.scalar_points()?;
    solve_separation_values(&|x: &[f64]| Ok(h.eval(x[0])), rset, g1, g0, sigma, penalty)
}

/// Separation for h given pointwise on the supports (any dimension).
pub fn solve_separation_values(
    h: &dyn Fn(&[f64]) -> Result<f64>,
    rset: &SummarySet,
    g1: &EmpiricalCond,
    g0: &EmpiricalCond,
    sigma: Sign,
    penalty: f64,
) -> Result<SeparationSolution> {
    if !(penalty >= 0.0) {
        return Err(Error::Validation("the slack penalty must be nonnegative".into()));
    }
    if rset.is_empty() {
        return Err(Error::Validation("the separation program needs at least one summary".into()));
    }
    let s = sigma.value();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (g, side) in [(g1, 1.0), (g0, -1.0)] {
        for atom in g.atoms() {
            let hv = h(&atom.location)?;
            let r = rset.evaluate(&atom.location)?;
            a.push(side * s * hv);
            b.push(r.iter().map(|v| side * s * v).collect::<Vec<_>>());
        }
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let zeta = if penalty.is_infinite() {
        let start = min_total_slack(&a, &b)?;
        let slack: f64 = slacks(&a, &b, &start).iter().sum();
        if slack <= 1e-9 * scale {
            min_norm_feasible(&a, &b, start)
        } else {
            start
        }
    } else {
        dual_coordinate_descent(&a, &b, penalty)
    };
    let xi = slacks(&a, &b, &zeta);
    let n1 = g1.atoms().len();
    let total_slack: f64 = xi.iter().sum();
    let max_residual = a
        .iter()
        .zip(&b)
        .zip(&xi)
        .map(|((ai, bi), x)| (ai - linalg::dot(bi, &zeta) - x).max(0.0))
        .fold(0.0, f64::max);
    let sharp = xi.iter().all(|&v| v <= 1e-9 * scale);
    let norm2 = linalg::dot(&zeta, &zeta);
    let objective = if penalty.is_infinite() {
        if sharp {
            norm2
        } else {
            f64::INFINITY
        }
    } else {
        norm2 + penalty * total_slack
    };
    Ok(SeparationSolution {
        sigma,
        zeta,
        support1: g1.atoms().iter().map(|x| x.location.clone()).collect(),
        slacks1: xi[..n1].to_vec(),
        support0: g0.atoms().iter().map(|x| x.location.clone()).collect(),
        slacks0: xi[n1..].to_vec(),
        penalty,
        objective,
        total_slack,
        max_residual,
        feasible: max_residual <= 1e-8,
        sharp,
    })
}

/// The mean-difference magnitude |ζ₊| ∨ |ζ₋| and the expected slacks.
pub fn m_md(
    plus: &SeparationSolution,
    minus: &SeparationSolution,
    g1: &EmpiricalCond,
    g0: &EmpiricalCond,
) -> Result<(Vec<f64>, f64)> {
    let same_support = |sol: &SeparationSolution| {
        sol.support1.len() == g1.atoms().len()
            && sol.support0.len() == g0.atoms().len()
            && sol.support1.iter().zip(g1.atoms()).all(|(x, a)| *x == a.location)
            && sol.support0.iter().zip(g0.atoms()).all(|(x, a)| *x == a.location)
    };
    if plus.sigma != Sign::Plus || minus.sigma != Sign::Minus {
        return Err(Error::Contract("expected one solution for each sign".into()));
    }
    if plus.zeta.len() != minus.zeta.len() || !same_support(plus) || !same_support(minus) {
        return Err(Error::Contract("separation solutions come from different problem instances".into()));
    }
    let m = plus.zeta.iter().zip(&minus.zeta).map(|(p, q)| p.abs().max(q.abs())).collect();
    let mut slack = 0.0;
    for sol in [plus, minus] {
        slack += g1.atoms().iter().zip(&sol.slacks1).map(|(a, x)| a.mass * x).sum::<f64>();
        slack += g0.atoms().iter().zip(&sol.slacks0).map(|(a, x)| a.mass * x).sum::<f64>();
    }
    Ok((m, slack))
}

fn slacks(a: &[f64], b: &[Vec<f64>], zeta: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(ai, bi)| (ai - linalg::dot(bi, zeta)).max(0.0)).collect()
}

fn dual_coordinate_descent(a: &[f64], b: &[Vec<f64>], penalty: f64) -> Vec<f64> {
    let m = a.len();
    let j = b[0].len();
    let mut lambda = vec![0.0; m];
    let mut zeta = vec![0.0; j];
    let q: Vec<f64> = b.iter().map(|bi| 0.5 * linalg::dot(bi, bi)).collect();
    for _sweep in 0..20_000 {
        for i in 0..m {
            let grad = linalg::dot(&b[i], &zeta) - a[i];
            let next = if q[i] > 0.0 {
                (lambda[i] - grad / q[i]).clamp(0.0, penalty)
            } else if a[i] > 0.0 {
                penalty
            } else {
                0.0
            };
            let step = next - lambda[i];
            if step != 0.0 {
                for (z, bv) in zeta.iter_mut().zip(&b[i]) {
                    *z += 0.5 * step * bv;
                }
                lambda[i] = next;
            }
        }
        // duality gap: primal ‖ζ‖² + LΣξ(ζ) against dual a'λ − ‖ζ‖²
        let norm2 = linalg::dot(&zeta, &zeta);
        let primal = norm2 + penalty * slacks(a, b, &zeta).iter().sum::<f64>();
        let dual = linalg::dot(a, &lambda) - norm2;
        if primal - dual <= 1e-12 * primal.abs().max(1.0) {
            break;
        }
    }
    zeta
}

/// Minimize Σ ξ subject to Bζ + ξ ≥ a, ξ ≥ 0 (ζ free) by the simplex method
/// with Bland's rule. Variables: ζ⁺, ζ⁻, ξ, surplus s; rows
/// Bζ⁺ − Bζ⁻ + ξ − s = a.
fn min_total_slack(a: &[f64], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = a.len();
    let j = b[0].len();
    let n = 2 * j + 2 * m;
    let mut tab = Matrix::zeros(m, n + 1);
    let mut basis = vec![0usize; m];
    let mut cost = vec![0.0; n];
    for c in cost.iter_mut().skip(2 * j).take(m) {
        *c = 1.0;
    }
    for i in 0..m {
        let flip = if a[i] >= 0.0 { 1.0 } else { -1.0 };
        for k in 0..j {
            tab[(i, k)] = flip * b[i][k];
            tab[(i, j + k)] = -flip * b[i][k];
        }
        tab[(i, 2 * j + i)] = flip;
        tab[(i, 2 * j + m + i)] = -flip;
        tab[(i, n)] = flip * a[i];
        basis[i] = if flip > 0.0 { 2 * j + i } else { 2 * j + m + i };
    }
    let tol = 1e-12;
    let mut converged = false;
    for _iter in 0..50_000 {
        let mut entering = None;
        for col in 0..n {
            if basis.contains(&col) {
                continue;
            }
            let mut r = cost[col];
            for i in 0..m {
                r -= cost[basis[i]] * tab[(i, col)];
            }
            if r < -tol {
                entering = Some(col);
                break;
            }
        }
        let Some(col) = entering else {
            converged = true;
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let piv = tab[(i, col)];
            if piv > tol {
                let ratio = tab[(i, n)] / piv;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - tol || ((ratio - lr).abs() <= tol && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::Numerical("slack minimization reported an unbounded direction".into()));
        };
        let piv = tab[(row, col)];
        for c in 0..=n {
            tab[(row, c)] /= piv;
        }
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = tab[(i, col)];
            if f != 0.0 {
                for c in 0..=n {
                    let v = tab[(row, c)];
                    tab[(i, c)] -= f * v;
                }
            }
        }
        basis[row] = col;
    }
    if !converged {
        return Err(Error::Numerical("slack minimization did not terminate".into()));
    }
    let mut zeta = vec![0.0; j];
    for (i, &var) in basis.iter().enumerate() {
        if var < j {
            zeta[var] += tab[(i, n)];
        } else if var < 2 * j {
            zeta[var - j] -= tab[(i, n)];
        }
    }
    Ok(zeta)
}

/// Minimum-norm ζ with Bζ ≥ a, by a primal active-set method started from
/// a feasible point. The identity Hessian makes each subproblem a
/// minimum-norm solve on the working set. Returns the start point if the
/// iteration budget runs out, which keeps feasibility intact.
fn min_norm_feasible(a: &[f64], b: &[Vec<f64>], start: Vec<f64>) -> Vec<f64> {
    let m = a.len();
    let scale = a.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut zeta = start.clone();
    let mut work: Vec<usize> = Vec::new();
    for _iter in 0..(50 * (m + zeta.len()) + 100) {
        let (target, mu) = match working_set_point(a, b, &work) {
            Some(v) => v,
            None => return start,
        };
        let d: Vec<f64> = target.iter().zip(&zeta).map(|(t, z)| t - z).collect();
        if linalg::norm2(&d) <= 1e-14 * (1.0 + linalg::norm2(&zeta)) {
            let worst = mu
                .iter()
                .enumerate()
                .filter(|(_, v)| **v < -1e-12)
                .min_by(|x, y| x.1.total_cmp(y.1).then(work[x.0].cmp(&work[y.0])));
            match worst {
                None => return target,
                Some((pos, _)) => {
                    work.remove(pos);
                    continue;
                }
            }
        }
        let mut step = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if work.contains(&i) {
                continue;
            }
            let bd = linalg::dot(&b[i], &d);
            if bd < -1e-14 * linalg::norm2(&b[i]) * linalg::norm2(&d) {
                let room = (linalg::dot(&b[i], &zeta) - a[i]).max(0.0);
                let t = room / -bd;
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        for (z, dv) in zeta.iter_mut().zip(&d) {
            *z += step * dv;
        }
        if let Some(i) = blocking {
            work.push(i);
        }
        if slacks(a, b, &zeta).iter().any(|&v| v > 1e3 * tol) {
            return start;
        }
    }
    start
}

/// Minimum-norm point of {z : b_i'z = a_i, i ∈ work} and its multipliers.
fn working_set_point(a: &[f64], b: &[Vec<f64>], work: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let j = b[0].len();
    if work.is_empty() {
        return Some((vec![0.0; j], Vec::new()));
    }
    let k = work.len();
    let mut gram = Matrix::zeros(k, k);
    for (p, &i) in work.iter().enumerate() {
        for (q, &l) in work.iter().enumerate() {
            gram[(p, q)] = linalg::dot(&b[i], &b[l]);
        }
    }
    let rhs: Vec<f64> = work.iter().map(|&i| a[i]).collect();
    let mu = linalg::solve(&gram, &rhs).ok()?;
    let mut z = vec![0.0; j];
    for (p, &i) in work.iter().enumerate() {
        for (zc, bv) in z.iter_mut().zip(&b[i]) {
            *zc += mu[p] * bv;
        }
    }
    Some((z, mu))
}
