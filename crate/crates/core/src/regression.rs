//! Least squares on Z = (1, D, s(X)): covariate maps, sample fits, population
//! (conditional) estimands on finite supports, and the induced-index refit.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::sample::{cmp_location, Arm, DesignView, EmpiricalCond, JointDist, Units};

/// Affine score `intercept + coefficients · x` over raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScore {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearScore {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Self {
        LinearScore { intercept, coefficients }
    }

    /// The first coordinate itself; the natural index when p = 1.
    pub fn coordinate() -> Self {
        LinearScore { intercept: 0.0, coefficients: vec![1.0] }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Dimension(format!(
                "score has {} coefficients, covariate vector has {}",
                self.coefficients.len(),
                x.len()
            )));
        }
        Ok(self.intercept + linalg::dot(&self.coefficients, x))
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.coefficients.len() != p {
            return Err(Error::Validation(format!(
                "index has {} coefficients but the sample has p = {p}",
                self.coefficients.len()
            )));
        }
        if !self.intercept.is_finite() || self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("index coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// The covariate map s(·) of the regression Y = α + βD + s(X)'γ + E.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateMap {
    /// No covariates: the regression is on (1, D) only.
    ConstantOnly,
    /// s(x) = x.
    Identity,
    /// A single known linear index.
    Index { score: LinearScore },
    /// A linear propensity score fitted by regressing D on (1, X).
    LinearPropensity { score: LinearScore },
    /// Indicators of consecutive strata of a score, first stratum dropped.
    /// A score value v falls in stratum k when it exceeds exactly k cutpoints.
    Strata { score: LinearScore, cutpoints: Vec<f64> },
    /// Polynomial (v, v², …, v^degree) in a score.
    Powers { score: LinearScore, degree: usize },
}

impl CovariateMap {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            CovariateMap::ConstantOnly | CovariateMap::Identity => Ok(()),
            CovariateMap::Index { score } | CovariateMap::LinearPropensity { score } => score.validate(p),
            CovariateMap::Strata { score, cutpoints } => {
                score.validate(p)?;
                if cutpoints.is_empty() {
                    return Err(Error::Validation("strata need at least one cutpoint".into()));
                }
                if cutpoints.iter().any(|c| !c.is_finite()) || cutpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Validation("strata cutpoints must be finite and strictly increasing".into()));
                }
                Ok(())
            }
            CovariateMap::Powers { score, degree } => {
                score.validate(p)?;
                if *degree == 0 {
                    return Err(Error::Validation("polynomial degree must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Number of columns s(x) contributes.
    pub fn width(&self, p: usize) -> usize {
        match self {
            CovariateMap::ConstantOnly => 0,
            CovariateMap::Identity => p,
            CovariateMap::Index { .. } | CovariateMap::LinearPropensity { .. } => 1,
            CovariateMap::Strata { cutpoints, .. } => cutpoints.len(),
            CovariateMap::Powers { degree, .. } => *degree,
        }
    }

    pub fn score(&self) -> Option<&LinearScore> {
        match self {
            CovariateMap::ConstantOnly | CovariateMap::Identity => None,
            CovariateMap::Index { score }
            | CovariateMap::LinearPropensity { score }
            | CovariateMap::Strata { score, .. }
            | CovariateMap::Powers { score, .. } => Some(score),
        }
    }

    pub fn covariates(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            CovariateMap::ConstantOnly => Ok(Vec::new()),
            CovariateMap::Identity => Ok(x.to_vec()),
            CovariateMap::Index { score } | CovariateMap::LinearPropensity { score } => Ok(vec![score.eval(x)?]),
            CovariateMap::Strata { score, cutpoints } => {
                let k = stratum_of(score.eval(x)?, cutpoints);
                Ok((1..=cutpoints.len()).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
            }
            CovariateMap::Powers { score, degree } => {
                let v = score.eval(x)?;
                let mut out = Vec::with_capacity(*degree);
                let mut acc = 1.0;
                for _ in 0..*degree {
                    acc *= v;
                    out.push(acc);
                }
                Ok(out)
            }
        }
    }

    /// Scalar index value used for one-dimensional imbalance metrics and
    /// matching. Identity qualifies only when p = 1.
    pub fn scalar_index(&self, x: &[f64]) -> Result<f64> {
        match self {
            CovariateMap::ConstantOnly => Err(Error::Dimension("a constant-only map has no index".into())),
            CovariateMap::Identity => {
                if x.len() == 1 {
                    Ok(x[0])
                } else {
                    Err(Error::Dimension(format!(
                        "identity map on p = {} covariates is not scalar; use an index map",
                        x.len()
                    )))
                }
            }
            other => other.score().expect("scored map").eval(x),
        }
    }

    /// Stratum number (0-based) for strata maps.
    pub fn stratum(&self, x: &[f64]) -> Result<Option<usize>> {
        match self {
            CovariateMap::Strata { score, cutpoints } => Ok(Some(stratum_of(score.eval(x)?, cutpoints))),
            _ => Ok(None),
        }
    }

    pub fn column_names(&self, p: usize) -> Vec<String> {
        let mut names = vec!["const".to_string(), "d".to_string()];
        match self {
            CovariateMap::ConstantOnly => {}
            CovariateMap::Identity => names.extend((1..=p).map(|j| format!("x{j}"))),
            CovariateMap::Index { .. } => names.push("index".into()),
            CovariateMap::LinearPropensity { .. } => names.push("pscore".into()),
            CovariateMap::Strata { cutpoints, .. } => {
                names.extend((2..=cutpoints.len() + 1).map(|k| format!("stratum{k}")))
            }
            CovariateMap::Powers { degree, .. } => names.extend((1..=*degree).map(|k| format!("score^{k}"))),
        }
        names
    }

    /// Linear propensity score: OLS of D on (1, X), computed without outcomes.
    pub fn fit_linear_propensity(view: &DesignView<'_>) -> Result<CovariateMap> {
        let p = view.p();
        let mut rows = Vec::with_capacity(view.len());
        let mut target = Vec::with_capacity(view.len());
        for k in 0..view.len() {
            let mut r = Vec::with_capacity(p + 1);
            r.push(1.0);
            r.extend_from_slice(view.x(k));
            rows.push(r);
            target.push(view.arm(k).indicator());
        }
        let mut names = vec!["const".to_string()];
        names.extend((1..=p).map(|j| format!("x{j}")));
        let z = Matrix::from_rows(&rows)?;
        let (coef, _, _) = weighted_ls(&z, &target, None, &names)?;
        Ok(CovariateMap::LinearPropensity {
            score: LinearScore { intercept: coef[0], coefficients: coef[1..].to_vec() },
        })
    }

    /// Strata at empirical quantiles of the score among one arm's units.
    pub fn quantile_strata(view: &DesignView<'_>, score: LinearScore, arm: Arm, count: usize) -> Result<CovariateMap> {
        if count < 2 {
            return Err(Error::Validation("at least two strata are required".into()));
        }
        let mut values = Vec::new();
        for k in view.arm_positions(arm) {
            values.push(score.eval(view.x(k))?);
        }
        if values.is_empty() {
            return Err(Error::EmptyArm(arm.code()));
        }
        let cutpoints = quantile_cutpoints(&mut values, count)?;
        Ok(CovariateMap::Strata { score, cutpoints })
    }
}

pub(crate) fn stratum_of(v: f64, cutpoints: &[f64]) -> usize {
    cutpoints.iter().filter(|&&c| v > c).count()
}

/// Interior quantiles at k/count (linear interpolation between order
/// statistics). Errors when ties make two cutpoints coincide.
pub fn quantile_cutpoints(values: &mut [f64], count: usize) -> Result<Vec<f64>> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut cuts = Vec::with_capacity(count - 1);
    for k in 1..count {
        let h = (n - 1) as f64 * k as f64 / count as f64;
        let lo = libm::floor(h) as usize;
        let hi = (lo + 1).min(n - 1);
        cuts.push(values[lo] + (h - lo as f64) * (values[hi] - values[lo]));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Degenerate("score ties collapse two strata cutpoints".into()));
    }
    Ok(cuts)
}

/// Regressor row (1, d, s(x)).
pub fn design_row(x: &[f64], arm: Arm, map: &CovariateMap) -> Result<Vec<f64>> {
    let mut row = vec![1.0, arm.indicator()];
    row.extend(map.covariates(x)?);
    Ok(row)
}

/// Weighted least squares with an explicit rank check on the normalized
/// Gram matrix. Returns (coefficients, Gram, smallest eigenvalue).
pub(crate) fn weighted_ls(
    z: &Matrix,
    target: &[f64],
    weights: Option<&[f64]>,
    names: &[String],
) -> Result<(Vec<f64>, Matrix, f64)> {
    let (n, k) = (z.rows(), z.cols());
    let total: f64 = weights.map_or(n as f64, |w| w.iter().sum());
    let mut gram = Matrix::zeros(k, k);
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        let r = z.row(i);
        for a in 0..k {
            for b in 0..=a {
                gram[(a, b)] += w * r[a] * r[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..=a {
            let v = gram[(a, b)] / total;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let (eig, vecs) = linalg::sym_eigen(&gram);
    let lambda_min = eig[0];
    let scale = gram.trace() / k as f64;
    if !(lambda_min > 1e-10 * scale) {
        let v: Vec<f64> = (0..k).map(|r| vecs[(r, 0)]).collect();
        let vmax = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let culprits: Vec<&str> = names
            .iter()
            .zip(&v)
            .filter(|(_, c)| c.abs() >= 0.1 * vmax)
            .map(|(n, _)| n.as_str())
            .collect();
        return Err(Error::Rank(format!(
            "smallest Gram eigenvalue {lambda_min:.3e}; collinear columns: {}",
            culprits.join(", ")
        )));
    }
    let (zs, ys) = match weights {
        None => (z.clone(), target.to_vec()),
        Some(w) => {
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for i in 0..n {
                let s = libm::sqrt(w[i]);
                rows.push(z.row(i).iter().map(|v| v * s).collect::<Vec<_>>());
                ys.push(target[i] * s);
            }
            (Matrix::from_rows(&rows)?, ys)
        }
    };
    let theta = linalg::lstsq_qr(&zs, &ys)?;
    Ok((theta, gram, lambda_min))
}

/// A least squares fit on a sample or subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// (α, β, γ…)
    pub theta: Vec<f64>,
    /// Mean of Z Z' over the fitted units.
    pub gram: Matrix,
    pub n: usize,
    pub residuals: Vec<f64>,
    /// Rows Z_i in unit order.
    pub design: Matrix,
    pub map: CovariateMap,
    pub column_names: Vec<String>,
    pub lambda_min: f64,
}

impl RegressionFit {
    pub fn alpha(&self) -> f64 {
        self.theta[0]
    }

    pub fn beta(&self) -> f64 {
        self.theta[1]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.theta[2..]
    }

    /// Fitted l(x, d).
    pub fn predict(&self, x: &[f64], arm: Arm) -> Result<f64> {
        Ok(linalg::dot(&design_row(x, arm, &self.map)?, &self.theta))
    }

    /// ‖mean Z_i Ê_i‖∞, zero up to rounding for a least squares solution.
    pub fn normal_equation_residual(&self) -> f64 {
        let k = self.theta.len();
        let mut acc = vec![0.0; k];
        for i in 0..self.n {
            for (a, z) in self.design.row(i).iter().enumerate() {
                acc[a] += z * self.residuals[i];
            }
        }
        acc.iter().fold(0.0f64, |m, v| m.max((v / self.n as f64).abs()))
    }
}

fn design_matrix<U: Units + ?Sized>(s: &U, map: &CovariateMap) -> Result<Matrix> {
    let rows = (0..s.len())
        .map(|k| {
            let u = s.unit(k);
            design_row(&u.x, u.arm, map)
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// OLS of y on (1, D, s(X)) over the units of `s`.
pub fn fit_ols<U: Units + ?Sized>(s: &U, map: &CovariateMap) -> Result<RegressionFit> {
    map.validate(s.p())?;
    s.require_both_arms()?;
    let y = s.outcomes()?;
    let z = design_matrix(s, map)?;
    let names = map.column_names(s.p());
    let (theta, gram, lambda_min) = weighted_ls(&z, &y, None, &names)?;
    let fitted = z.matvec(&theta);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(RegressionFit {
        theta,
        gram,
        n: s.len(),
        residuals,
        design: z,
        map: map.clone(),
        column_names: names,
        lambda_min,
    })
}

/// Refit on (1, D, t) with t the fitted linear index s(x)'γ̂ of the base fit.
/// The slope on D is unchanged and the index coefficient is one.
pub fn induced_index_refit<U: Units + ?Sized>(s: &U, base: &RegressionFit) -> Result<RegressionFit> {
    let gamma = base.gamma();
    if gamma.is_empty() || gamma.iter().all(|g| *g == 0.0) {
        return Err(Error::Degenerate("the fitted covariate coefficients are all zero; no index to induce".into()));
    }
    let score = match &base.map {
        CovariateMap::Identity => LinearScore::new(0.0, gamma.to_vec()),
        CovariateMap::Index { score } | CovariateMap::LinearPropensity { score } => LinearScore::new(
            gamma[0] * score.intercept,
            score.coefficients.iter().map(|c| c * gamma[0]).collect(),
        ),
        _ => {
            return Err(Error::Contract(
                "the induced index needs a map that is linear in the raw covariates".into(),
            ))
        }
    };
    fit_ols(s, &CovariateMap::Index { score })
}

/// Conditional mean f(x, d) of the outcome.
pub trait ConditionalMean {
    fn mean(&self, location: &[f64], arm: Arm) -> Result<f64>;
}

/// Closure adapter for [`ConditionalMean`].
pub struct FnMean<F>(pub F);

impl<F: Fn(&[f64], Arm) -> f64> ConditionalMean for FnMean<F> {
    fn mean(&self, location: &[f64], arm: Arm) -> Result<f64> {
        Ok((self.0)(location, arm))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub x: Vec<f64>,
    pub f0: f64,
    pub f1: f64,
    /// Conditional second moment of the error, when known.
    #[serde(default)]
    pub noise0: Option<f64>,
    #[serde(default)]
    pub noise1: Option<f64>,
}

/// Tabulated f(x, d) on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    rows: Vec<OutcomeRow>,
}

impl OutcomeTable {
    pub fn new(mut rows: Vec<OutcomeRow>) -> Result<Self> {
        if rows.iter().any(|r| !(r.f0.is_finite() && r.f1.is_finite())) {
            return Err(Error::Validation("outcome table entries must be finite".into()));
        }
        rows.sort_by(|a, b| cmp_location(&a.x, &b.x));
        if rows.windows(2).any(|w| cmp_location(&w[0].x, &w[1].x).is_eq()) {
            return Err(Error::Validation("outcome table lists a location twice".into()));
        }
        Ok(OutcomeTable { rows })
    }

    /// Tabulate a function on the locations of a joint distribution.
    pub fn tabulate(g: &JointDist, f: impl Fn(&[f64], Arm) -> f64) -> Result<Self> {
        let support = crate::sample::union_support(&g.g1, &g.g0);
        Self::new(
            support
                .into_iter()
                .map(|x| OutcomeRow {
                    f0: f(&x, Arm::Untreated),
                    f1: f(&x, Arm::Treated),
                    x,
                    noise0: None,
                    noise1: None,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[OutcomeRow] {
        &self.rows
    }

    pub fn row(&self, x: &[f64]) -> Result<&OutcomeRow> {
        self.rows
            .binary_search_by(|r| cmp_location(&r.x, x))
            .map(|k| &self.rows[k])
            .map_err(|_| Error::Domain(format!("support point {x:?} is not covered by the outcome table")))
    }
}

impl ConditionalMean for OutcomeTable {
    fn mean(&self, location: &[f64], arm: Arm) -> Result<f64> {
        let r = self.row(location)?;
        Ok(match arm {
            Arm::Treated => r.f1,
            Arm::Untreated => r.f0,
        })
    }
}

/// A finite population: joint law of (X, D) and the conditional mean table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub joint: JointDist,
    pub outcome: OutcomeTable,
}

impl DgpSpec {
    pub fn new(joint: JointDist, outcome: OutcomeTable) -> Result<Self> {
        for (x, _, _) in joint.joint_atoms() {
            outcome.row(x)?;
        }
        Ok(DgpSpec { joint, outcome })
    }
}

/// The population regression of f(X, D) on Z under a finite joint law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFit {
    pub theta: Vec<f64>,
    pub gram: Matrix,
    pub map: CovariateMap,
    pub column_names: Vec<String>,
}

impl PopulationFit {
    pub fn beta(&self) -> f64 {
        self.theta[1]
    }

    pub fn predict(&self, x: &[f64], arm: Arm) -> Result<f64> {
        Ok(linalg::dot(&design_row(x, arm, &self.map)?, &self.theta))
    }
}

/// θ from regressing f(x, d) on (1, d, s(x)) with the joint masses as weights.
pub fn conditional_estimand<M: ConditionalMean + ?Sized>(
    outcome: &M,
    g: &JointDist,
    map: &CovariateMap,
) -> Result<PopulationFit> {
    let p = g.g1.dim();
    map.validate(p)?;
    let mut rows = Vec::new();
    let mut target = Vec::new();
    let mut weights = Vec::new();
    for (x, arm, w) in g.joint_atoms() {
        rows.push(design_row(x, arm, map)?);
        target.push(outcome.mean(x, arm)?);
        weights.push(w);
    }
    let names = map.column_names(p);
    let z = Matrix::from_rows(&rows)?;
    let (theta, gram, _) = weighted_ls(&z, &target, Some(&weights), &names)?;
    Ok(PopulationFit { theta, gram, map: map.clone(), column_names: names })
}

/// ATT: mean over g1 of f(x,1) − f(x,0).
pub fn att_parameter<M: ConditionalMean + ?Sized>(outcome: &M, g1: &EmpiricalCond) -> Result<f64> {
    let mut acc = 0.0;
    for a in g1.atoms() {
        acc += a.mass * (outcome.mean(&a.location, Arm::Treated)? - outcome.mean(&a.location, Arm::Untreated)?);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedParameters {
    /// Effect on the treated.
    pub att: f64,
    /// Effect on the untreated.
    pub ateu: f64,
    /// Average effect over the whole population.
    pub ate: f64,
    /// β of the model with centered D × s(X) interactions, when requested.
    pub interaction_att: Option<f64>,
}

/// ATT, ATEU and ATE by direct summation over the joint support.
pub fn extended_parameters<M: ConditionalMean + ?Sized>(
    outcome: &M,
    g: &JointDist,
    interaction: Option<&CovariateMap>,
) -> Result<ExtendedParameters> {
    let att = att_parameter(outcome, &g.g1)?;
    let ateu = att_parameter(outcome, &g.g0)?;
    let mut ate = 0.0;
    for (x, _, w) in g.joint_atoms() {
        ate += w * (outcome.mean(x, Arm::Treated)? - outcome.mean(x, Arm::Untreated)?);
    }
    let interaction_att = match interaction {
        Some(map) => Some(interaction_estimand(outcome, g, map)?.beta()),
        None => None,
    };
    Ok(ExtendedParameters { att, ateu, ate, interaction_att })
}

/// Population fit of the model with interactions D·(s(X) − E[s(X)|D=1]),
/// whose D coefficient equals the treated-average of l(x,1) − l(x,0).
pub fn interaction_estimand<M: ConditionalMean + ?Sized>(
    outcome: &M,
    g: &JointDist,
    map: &CovariateMap,
) -> Result<PopulationFit> {
    let p = g.g1.dim();
    map.validate(p)?;
    let width = map.width(p);
    let mut center = vec![0.0; width];
    for a in g.g1.atoms() {
        for (c, v) in center.iter_mut().zip(map.covariates(&a.location)?) {
            *c += a.mass * v;
        }
    }
    let mut rows = Vec::new();
    let mut target = Vec::new();
    let mut weights = Vec::new();
    for (x, arm, w) in g.joint_atoms() {
        let mut row = design_row(x, arm, map)?;
        let s = map.covariates(x)?;
        row.extend(s.iter().zip(&center).map(|(v, c)| arm.indicator() * (v - c)));
        rows.push(row);
        target.push(outcome.mean(x, arm)?);
        weights.push(w);
    }
    let mut names = map.column_names(p);
    let extra: Vec<String> = names[2..].iter().map(|n| format!("d*{n}")).collect();
    names.extend(extra);
    let z = Matrix::from_rows(&rows)?;
    let (theta, gram, _) = weighted_ls(&z, &target, Some(&weights), &names)?;
    Ok(PopulationFit { theta, gram, map: map.clone(), column_names: names })
}
