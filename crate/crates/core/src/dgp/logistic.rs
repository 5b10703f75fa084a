//! Logistic regression by Newton's method.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the mean score at the solution.
    pub grad_norm: f64,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

fn log_lik(z: &Matrix, y: &[f64], coef: &[f64]) -> f64 {
    (0..z.rows())
        .map(|i| {
            let v = linalg::dot(z.row(i), coef);
            // log σ(v) and log(1 − σ(v)) without overflow
            let log1pexp = if v > 0.0 { v + libm::log1p(libm::exp(-v)) } else { libm::log1p(libm::exp(v)) };
            y[i] * v - log1pexp
        })
        .sum()
}

/// Coefficients this large only arise when the likelihood has no finite
/// maximizer (complete or quasi-complete separation).
const SEPARATION_LIMIT: f64 = 50.0;

/// Fit P(y = 1 | z) = σ(z'θ) for y ∈ {0, 1}. Newton steps with step
/// halving until the mean score is below 1e-10 in max-norm. Diverging
/// coefficients (separated data) are reported as a numerical error.
pub fn fit_logistic(z: &Matrix, y: &[f64]) -> Result<LogisticFit> {
    let (n, k) = (z.rows(), z.cols());
    if y.len() != n {
        return Err(Error::Dimension("one outcome per row required".into()));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::Validation("logistic outcomes must be 0 or 1".into()));
    }
    let mut coef = alloc::vec![0.0; k];
    let mut ll = log_lik(z, y, &coef);
    for iter in 0..200 {
        let mut grad = alloc::vec![0.0; k];
        let mut hess = Matrix::zeros(k, k);
        for i in 0..n {
            let r = z.row(i);
            let p = sigmoid(linalg::dot(r, &coef));
            let w = p * (1.0 - p);
            for a in 0..k {
                grad[a] += (y[i] - p) * r[a] / n as f64;
                for b in 0..k {
                    hess[(a, b)] += w * r[a] * r[b] / n as f64;
                }
            }
        }
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < 1e-10 {
            return Ok(LogisticFit { coef, iterations: iter, grad_norm: gnorm });
        }
        let step = linalg::solve(&hess, &grad)
            .map_err(|_| Error::Numerical("logistic Hessian is singular (separated data?)".into()))?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = coef.iter().zip(&step).map(|(c, s)| c + t * s).collect();
            let tll = log_lik(z, y, &trial);
            if tll >= ll - 1e-12 * ll.abs() || t < 1e-8 {
                coef = trial;
                ll = tll;
                break;
            }
            t *= 0.5;
        }
        if coef.iter().any(|c| !c.is_finite() || c.abs() > SEPARATION_LIMIT) {
            return Err(Error::Numerical("logistic coefficients diverge (separated data)".into()));
        }
    }
    Err(Error::Numerical("logistic fit did not reach gradient norm 1e-10 in 200 iterations".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn saturated_binary_design_matches_cell_frequencies() {
        // intercept + indicator: fitted probabilities equal cell means
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, if i < 4 { 1.0 } else { 0.0 }]).collect();
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let fit = fit_logistic(&Matrix::from_rows(&rows).unwrap(), &y).unwrap();
        assert!((sigmoid(fit.coef[0]) - 0.5).abs() < 1e-9);
        assert!((sigmoid(fit.coef[0] + fit.coef[1]) - 0.25).abs() < 1e-9);
        assert!(fit.grad_norm < 1e-10);
    }

    #[test]
    fn separated_data_is_reported() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!(fit_logistic(&Matrix::from_rows(&rows).unwrap(), &y).is_err());
    }
}
