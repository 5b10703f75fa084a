//! Monte Carlo pipeline: draw a sample from a pool, fit a logistic
//! outcome model on the estimated propensity index and treat it as the
//! truth, then compare estimand bias before and after matching on that
//! index.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bounds::{assemble_bounds, bias_exact, BoundFamily, BoundReport};
use crate::design::{nn_match, MatchMetric, MatchSpec};
use crate::dgp::logistic::{fit_logistic, sigmoid};
use crate::dgp::rng::substream;
use crate::error::{Error, Result};
use crate::imbalance::{ImbalanceVector, SummarySet};
use crate::linalg::Matrix;
use crate::misspec::MisspecVector;
use crate::regression::{stratum_of, CovariateMap, FnMean, LinearScore, OutcomeRow, OutcomeTable};
use crate::sample::{Arm, JointDist, Sample, Unit, Units};

/// Working regression specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimSpec {
    /// (1, D) at the index level.
    A,
    /// (1, D, ê).
    B,
    /// (1, D, ê, ê², ê³).
    C,
    /// (1, D) with the index coarsened to strata.
    AStrata,
    /// (1, D, stratum indicators).
    Saturated,
}

impl SimSpec {
    pub const ALL: [SimSpec; 5] = [SimSpec::A, SimSpec::B, SimSpec::C, SimSpec::AStrata, SimSpec::Saturated];

    pub fn name(self) -> &'static str {
        match self {
            SimSpec::A => "A",
            SimSpec::B => "B",
            SimSpec::C => "C",
            SimSpec::AStrata => "A_strata",
            SimSpec::Saturated => "saturated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        SimSpec::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown specification {s}")))
    }

    fn stratified(self) -> bool {
        matches!(self, SimSpec::AStrata | SimSpec::Saturated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    pub n1: usize,
    pub n0: usize,
    pub replications: usize,
    pub seed: u64,
    pub specs: Vec<SimSpec>,
    /// An `Index` metric is replaced by each replication's fitted
    /// propensity index; `Euclidean` matches on the raw covariates.
    pub matcher: MatchSpec,
    /// Number of strata cut at quantiles of the untreated index.
    pub strata: usize,
    /// Penalty of the separation program (∞ forces exact separation).
    #[serde(with = "crate::float_serde")]
    pub md_penalty: f64,
}

impl SimPlan {
    /// Greedy one-to-one matching on the index, every specification,
    /// quartile strata.
    pub fn new(n1: usize, n0: usize, replications: usize, seed: u64) -> Self {
        SimPlan {
            n1,
            n0,
            replications,
            seed,
            specs: SimSpec::ALL.to_vec(),
            matcher: MatchSpec::greedy(MatchMetric::Index {
                map: CovariateMap::Index { score: LinearScore::coordinate() },
            }),
            strata: 4,
            md_penalty: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::Validation("n1 must be positive".into()));
        }
        if self.n1 > self.n0 {
            return Err(Error::Validation(format!("n1 = {} exceeds n0 = {}", self.n1, self.n0)));
        }
        if self.replications == 0 {
            return Err(Error::Validation("at least one replication is required".into()));
        }
        if self.specs.is_empty() {
            return Err(Error::Validation("no specifications requested".into()));
        }
        if self.strata < 2 {
            return Err(Error::Validation("at least two strata are required".into()));
        }
        if !(self.md_penalty > 0.0) {
            return Err(Error::Validation("separation penalty must be positive".into()));
        }
        if let Some(c) = self.matcher.caliper {
            if !(c > 0.0) {
                return Err(Error::Validation(format!("caliper must be positive, got {c}")));
            }
        }
        Ok(())
    }

    fn check_pool(&self, pool: &Sample) -> Result<()> {
        for (arm, need) in [(Arm::Treated, self.n1), (Arm::Untreated, self.n0)] {
            let have = pool.arm_count(arm);
            if have < need {
                return Err(Error::Validation(format!(
                    "pool has {have} units in arm {} but the plan draws {need}",
                    arm.code()
                )));
            }
        }
        Ok(())
    }
}

/// Estimand, bias and bound ingredients on one (sub)sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSide {
    pub beta: f64,
    pub tau: f64,
    pub bias: f64,
    pub c: ImbalanceVector,
    pub m: MisspecVector,
    pub bounds: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub rep: u64,
    pub spec: SimSpec,
    pub pre: SimSide,
    pub post: SimSide,
}

impl SimRow {
    /// Flat (column, value) pairs after `rep` and `spec`.
    pub fn columns(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![
            ("beta_pre".to_string(), Some(self.pre.beta)),
            ("beta_post".to_string(), Some(self.post.beta)),
            ("tau_pre".to_string(), Some(self.pre.tau)),
            ("tau_post".to_string(), Some(self.post.tau)),
            ("bias_pre".to_string(), Some(self.pre.bias)),
            ("bias_post".to_string(), Some(self.post.bias)),
        ];
        for (tag, side) in [("pre", &self.pre), ("post", &self.post)] {
            let md_index = side.c.md.as_ref().and_then(|v| v.last().copied());
            let m_md_index = side.m.m_md.as_ref().and_then(|v| v.last().copied());
            let cols = [
                ("c_ks", side.c.ks),
                ("c_w1", side.c.w1),
                ("c_tv", Some(side.c.tv)),
                ("c_dr", Some(side.c.dr)),
                ("c_md", md_index),
                ("m_ks", side.m.m_ks),
                ("m_mkw", side.m.m_lip),
                ("m_tv", Some(side.m.m_sup)),
                ("m_dr", Some(side.m.m_l2_g0)),
                ("m_md", m_md_index),
                ("md_slack", side.m.md_slack),
            ];
            out.extend(cols.into_iter().map(|(k, v)| (format!("{k}_{tag}"), v)));
            for f in BoundFamily::ALL {
                out.push((format!("bound_{}_{tag}", f.name()), side.bounds.bound(f)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplicationOutcome {
    Completed { rep: u64, rows: Vec<SimRow> },
    Skipped { rep: u64, reason: String },
}

impl ReplicationOutcome {
    pub fn rep(&self) -> u64 {
        match self {
            ReplicationOutcome::Completed { rep, .. } | ReplicationOutcome::Skipped { rep, .. } => *rep,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkippedReplication {
    pub rep: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub rows: Vec<SimRow>,
    pub skipped: Vec<SkippedReplication>,
}

impl SimTable {
    /// Merge outcomes in replication order, whatever order they finished in.
    pub fn from_outcomes(mut outcomes: Vec<ReplicationOutcome>) -> Self {
        outcomes.sort_by_key(ReplicationOutcome::rep);
        let mut table = SimTable::default();
        for o in outcomes {
            match o {
                ReplicationOutcome::Completed { rows, .. } => table.rows.extend(rows),
                ReplicationOutcome::Skipped { rep, reason } => table.skipped.push(SkippedReplication { rep, reason }),
            }
        }
        table
    }

    pub fn rows_for(&self, spec: SimSpec) -> impl Iterator<Item = &SimRow> {
        self.rows.iter().filter(move |r| r.spec == spec)
    }

    /// Share of completed replications in which matching shrank |bias|.
    pub fn improved_share(&self, spec: SimSpec) -> Option<f64> {
        let (mut n, mut better) = (0usize, 0usize);
        for r in self.rows_for(spec) {
            n += 1;
            if r.post.bias.abs() < r.pre.bias.abs() {
                better += 1;
            }
        }
        (n > 0).then(|| better as f64 / n as f64)
    }
}

/// All replications in sequence. Parallel callers can map
/// [`run_replication`] over `0..replications` and merge with
/// [`SimTable::from_outcomes`]; the result is identical.
pub fn run_simulation(pool: &Sample, plan: &SimPlan) -> Result<SimTable> {
    plan.validate()?;
    plan.check_pool(pool)?;
    let outcomes = (0..plan.replications as u64).map(|rep| run_replication(pool, plan, rep)).collect::<Result<_>>()?;
    Ok(SimTable::from_outcomes(outcomes))
}

/// One replication. Plan errors are returned; numerical trouble inside the
/// replication (separated logit, singular Gram, tied cutpoints) becomes a
/// skipped record.
pub fn run_replication(pool: &Sample, plan: &SimPlan, rep: u64) -> Result<ReplicationOutcome> {
    plan.validate()?;
    plan.check_pool(pool)?;
    let sample = draw_sample(pool, plan, rep)?;
    match replicate(&sample, plan, rep) {
        Ok(rows) => Ok(ReplicationOutcome::Completed { rep, rows }),
        Err(e) => Ok(ReplicationOutcome::Skipped { rep, reason: e.to_string() }),
    }
}

fn draw_sample(pool: &Sample, plan: &SimPlan, rep: u64) -> Result<Sample> {
    let mut rng = substream(plan.seed, rep);
    let mut chosen: Vec<usize> = Vec::with_capacity(plan.n1 + plan.n0);
    for (arm, n) in [(Arm::Treated, plan.n1), (Arm::Untreated, plan.n0)] {
        let positions: Vec<usize> =
            pool.units().iter().enumerate().filter(|(_, u)| u.arm == arm).map(|(k, _)| k).collect();
        chosen.extend(index::sample(&mut rng, positions.len(), n).into_iter().map(|k| positions[k]));
    }
    chosen.sort_unstable();
    let units: Vec<Unit> = chosen.into_iter().map(|k| pool.units()[k].clone()).collect();
    Sample::new(units, false)
}

fn replicate(sample: &Sample, plan: &SimPlan, rep: u64) -> Result<Vec<SimRow>> {
    let view = sample.redacted();
    let index_map = CovariateMap::fit_linear_propensity(&view)?;
    let score = index_map.score().expect("fitted score").clone();

    // outcome model on (1, D, ê, Dê)
    let ys = sample.outcomes()?;
    let mut rows = Vec::with_capacity(sample.len());
    for u in sample.units() {
        let (d, t) = (u.arm.indicator(), score.eval(&u.x)?);
        rows.push(vec![1.0, d, t, d * t]);
    }
    let logit = fit_logistic(&Matrix::from_rows(&rows)?, &ys)?;
    let th = logit.coef;
    let f = move |t: f64, d: f64| sigmoid(th[0] + th[1] * d + th[2] * t + th[3] * d * t);

    let mut spec = plan.matcher.clone();
    if let MatchMetric::Index { .. } = spec.metric {
        spec.metric = MatchMetric::Index { map: index_map.clone() };
    }
    let matched = nn_match(&view, &spec)?;

    let pre = JointDist::from_units(sample, Some(&index_map))?;
    let post = JointDist::from_units(&matched, Some(&index_map))?;
    let cuts = match CovariateMap::quantile_strata(&view, score, Arm::Untreated, plan.strata)? {
        CovariateMap::Strata { cutpoints, .. } => cutpoints,
        _ => unreachable!("quantile_strata builds strata"),
    };

    let mut out = Vec::with_capacity(plan.specs.len());
    for &kind in &plan.specs {
        let side = |joint: &JointDist| -> Result<SimSide> {
            if kind.stratified() {
                let (sj, table) = coarsen(joint, &cuts, &f)?;
                let map = match kind {
                    // indicators for the strata this (sub)sample reaches; an
                    // empty stratum would make the dummies collinear
                    SimSpec::Saturated => {
                        let labels: Vec<f64> = table.rows().iter().map(|r| r.x[0]).collect();
                        let cutpoints: Vec<f64> = labels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
                        if cutpoints.is_empty() {
                            CovariateMap::ConstantOnly
                        } else {
                            CovariateMap::Strata { score: LinearScore::coordinate(), cutpoints }
                        }
                    }
                    _ => CovariateMap::ConstantOnly,
                };
                evaluate(&table, &sj, &map, plan.md_penalty)
            } else {
                let map = match kind {
                    SimSpec::A => CovariateMap::ConstantOnly,
                    SimSpec::B => CovariateMap::Powers { score: LinearScore::coordinate(), degree: 1 },
                    _ => CovariateMap::Powers { score: LinearScore::coordinate(), degree: 3 },
                };
                let truth = FnMean(|x: &[f64], arm: Arm| f(x[0], arm.indicator()));
                evaluate(&truth, joint, &map, plan.md_penalty)
            }
        };
        let row = SimRow { rep, spec: kind, pre: side(&pre)?, post: side(&post)? };
        out.push(row);
    }
    Ok(out)
}

fn evaluate<M: crate::regression::ConditionalMean>(
    truth: &M,
    joint: &JointDist,
    map: &CovariateMap,
    penalty: f64,
) -> Result<SimSide> {
    let dec = bias_exact(truth, joint, map)?;
    let rset = SummarySet::constant_and_coordinates(1);
    let c = ImbalanceVector::compute(&joint.g1, &joint.g0, Some(&rset))?;
    let m = MisspecVector::from_values(&|x| dec.h_at(x), &joint.g1, &joint.g0, Some(&rset), penalty)?;
    let bounds = assemble_bounds(&c, Some(&m), None);
    Ok(SimSide { beta: dec.beta, tau: dec.tau, bias: dec.bias, c, m, bounds })
}

/// Push the index down to stratum labels 0, 1, … and average the outcome
/// model within (stratum, arm). A stratum one arm never reaches borrows the
/// other arm's average; such cells carry no regression weight.
fn coarsen(joint: &JointDist, cuts: &[f64], f: &impl Fn(f64, f64) -> f64) -> Result<(JointDist, OutcomeTable)> {
    let k = cuts.len() + 1;
    // [arm][stratum] → (mass, mass·f(t,0), mass·f(t,1))
    let mut acc = [vec![(0.0, 0.0, 0.0); k], vec![(0.0, 0.0, 0.0); k]];
    for arm in Arm::BOTH {
        for a in joint.arm(arm).atoms() {
            let t = a.location[0];
            let cell = &mut acc[arm.code() as usize][stratum_of(t, cuts)];
            cell.0 += a.mass;
            cell.1 += a.mass * f(t, 0.0);
            cell.2 += a.mass * f(t, 1.0);
        }
    }
    let mut rows = Vec::new();
    for s in 0..k {
        let (t1, t0) = (acc[1][s], acc[0][s]);
        if t1.0 == 0.0 && t0.0 == 0.0 {
            continue;
        }
        let own = |cell: (f64, f64, f64), other: (f64, f64, f64), pick: fn((f64, f64, f64)) -> f64| {
            if cell.0 > 0.0 {
                pick(cell) / cell.0
            } else {
                pick(other) / other.0
            }
        };
        rows.push(OutcomeRow {
            x: vec![s as f64],
            f0: own(t0, t1, |c| c.1),
            f1: own(t1, t0, |c| c.2),
            noise0: None,
            noise1: None,
        });
    }
    let coarse = joint.pushforward(|x| stratum_of(x[0], cuts) as f64)?;
    Ok((coarse, OutcomeTable::new(rows)?))
}
