//! Design phase: build subsamples from covariates and treatment only, then
//! compare balance before and after.
//!
//! Every constructor here takes a [`DesignView`], which has no access to
//! outcomes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::{ImbalanceVector, SummarySet};
use crate::regression::CovariateMap;
use crate::sample::{empirical_cond, Arm, DesignView, MatchedPair, Provenance, SubsampleHandle, Units};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchMetric {
    /// Euclidean distance between raw covariate vectors.
    Euclidean,
    /// Absolute difference of a scalar index.
    Index { map: CovariateMap },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    /// Candidate pairs by (distance, treated id, control id).
    Greedy,
    /// Treated units by id, each taking its nearest available control.
    TreatedId,
}

/// One-to-one nearest-neighbour matching of treated units to controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub metric: MatchMetric,
    pub replacement: bool,
    pub order: MatchOrder,
    pub caliper: Option<f64>,
}

impl MatchSpec {
    pub fn greedy(metric: MatchMetric) -> Self {
        MatchSpec { metric, replacement: false, order: MatchOrder::Greedy, caliper: None }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if let Some(c) = self.caliper {
            if !(c > 0.0) {
                return Err(Error::Validation(format!("caliper must be positive, got {c}")));
            }
        }
        if let MatchMetric::Index { map } = &self.metric {
            map.validate(p)?;
        }
        Ok(())
    }
}

struct Candidate {
    dist: f64,
    t: usize,
    c: usize,
}

/// Match without reading outcomes. Ties go to the lowest id (string order).
/// With replacement a control may serve several treated units but appears
/// once in the subsample.
pub fn nn_match<'a>(view: &DesignView<'a>, spec: &MatchSpec) -> Result<SubsampleHandle<'a>> {
    spec.validate(view.p())?;
    let mut treated = view.arm_positions(Arm::Treated);
    let mut controls = view.arm_positions(Arm::Untreated);
    if treated.is_empty() {
        return Err(Error::EmptyArm(1));
    }
    if controls.is_empty() {
        return Err(Error::EmptyArm(0));
    }
    if !spec.replacement && treated.len() > controls.len() {
        return Err(Error::Capacity(format!(
            "{} treated units cannot be matched without replacement to {} controls",
            treated.len(),
            controls.len()
        )));
    }
    treated.sort_by(|&a, &b| view.id(a).cmp(view.id(b)));
    controls.sort_by(|&a, &b| view.id(a).cmp(view.id(b)));
    let loc = |k: usize| -> Result<Vec<f64>> {
        match &spec.metric {
            MatchMetric::Euclidean => Ok(view.x(k).to_vec()),
            MatchMetric::Index { map } => Ok(alloc::vec![map.scalar_index(view.x(k))?]),
        }
    };
    let tloc = treated.iter().map(|&k| loc(k)).collect::<Result<Vec<_>>>()?;
    let cloc = controls.iter().map(|&k| loc(k)).collect::<Result<Vec<_>>>()?;
    let dist = |a: &[f64], b: &[f64]| libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum());
    let admissible = |d: f64| spec.caliper.is_none_or(|c| d <= c);

    // (treated index, control index, distance) in match order
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    let mut used = alloc::vec![false; controls.len()];
    match (spec.order, spec.replacement) {
        (MatchOrder::Greedy, false) => {
            let mut cands = Vec::with_capacity(treated.len() * controls.len());
            for (ti, tl) in tloc.iter().enumerate() {
                for (ci, cl) in cloc.iter().enumerate() {
                    let d = dist(tl, cl);
                    if admissible(d) {
                        cands.push(Candidate { dist: d, t: ti, c: ci });
                    }
                }
            }
            // indices are already in id order, so comparing them is comparing ids
            cands.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.t.cmp(&b.t)).then(a.c.cmp(&b.c)));
            let mut done = alloc::vec![false; treated.len()];
            for cand in cands {
                if !done[cand.t] && !used[cand.c] {
                    done[cand.t] = true;
                    used[cand.c] = true;
                    pairs.push((cand.t, cand.c, cand.dist));
                }
            }
        }
        _ => {
            for (ti, tl) in tloc.iter().enumerate() {
                let mut best: Option<(f64, usize)> = None;
                for (ci, cl) in cloc.iter().enumerate() {
                    if used[ci] && !spec.replacement {
                        continue;
                    }
                    let d = dist(tl, cl);
                    if admissible(d) && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, ci));
                    }
                }
                if let Some((d, ci)) = best {
                    used[ci] = true;
                    pairs.push((ti, ci, d));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Capacity("all treated dropped: no admissible control within the caliper".into()));
    }
    let mut matched_t = alloc::vec![false; treated.len()];
    let mut members = Vec::new();
    for &(ti, ci, _) in &pairs {
        matched_t[ti] = true;
        members.push(treated[ti]);
        members.push(controls[ci]);
    }
    members.sort_unstable();
    members.dedup();
    let dropped = treated
        .iter()
        .zip(&matched_t)
        .filter(|(_, m)| !**m)
        .map(|(&k, _)| view.id(k).to_string())
        .collect();
    let provenance = Provenance::Matched {
        pairs: pairs
            .iter()
            .map(|&(ti, ci, d)| MatchedPair {
                treated_id: view.id(treated[ti]).to_string(),
                control_id: view.id(controls[ci]).to_string(),
                distance: d,
            })
            .collect(),
        dropped_treated: dropped,
    };
    view.subsample(members, provenance)
}

/// Keep units whose index lies in [lo, hi].
pub fn trim_by_score<'a>(view: &DesignView<'a>, index: &CovariateMap, lo: f64, hi: f64) -> Result<SubsampleHandle<'a>> {
    if !(lo < hi) {
        return Err(Error::Validation(format!("trim bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    index.validate(view.p())?;
    let mut members = Vec::new();
    for k in 0..view.len() {
        let v = index.scalar_index(view.x(k))?;
        if lo <= v && v <= hi {
            members.push(k);
        }
    }
    for arm in Arm::BOTH {
        if !members.iter().any(|&k| view.arm(k) == arm) {
            return Err(Error::EmptyArm(arm.code()));
        }
    }
    view.subsample(members, Provenance::Trimmed { lo, hi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub metric: String,
    pub pre: f64,
    pub post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub pre: ImbalanceVector,
    pub post: ImbalanceVector,
    pub n_pre: usize,
    pub n_post: usize,
    pub rows: Vec<BalanceRow>,
}

fn flatten(v: &ImbalanceVector) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(ks) = v.ks {
        out.push(("ks".to_string(), ks));
    }
    if let Some(w1) = v.w1 {
        out.push(("w1".to_string(), w1));
    }
    out.push(("tv".to_string(), v.tv));
    out.push(("dr".to_string(), v.dr));
    out.push(("dr_singular".to_string(), v.dr_singular));
    if let Some(md) = &v.md {
        for (name, val) in v.md_names.iter().zip(md) {
            out.push((format!("md[{name}]"), *val));
        }
    }
    if let Some([lo, hi]) = v.lp {
        out.push(("lp_lo".to_string(), lo));
        out.push(("lp_hi".to_string(), hi));
    }
    out
}

/// Every imbalance metric on the index before and after subsampling.
pub fn balance_compare<F: Units + ?Sized, S: Units + ?Sized>(
    full: &F,
    sub: &S,
    index: &CovariateMap,
    rset: Option<&SummarySet>,
) -> Result<BalanceTable> {
    let imb = |s: &dyn Fn(Arm) -> Result<crate::sample::EmpiricalCond>| -> Result<ImbalanceVector> {
        ImbalanceVector::compute(&s(Arm::Treated)?, &s(Arm::Untreated)?, rset)
    };
    let pre = imb(&|arm| empirical_cond(full, arm, Some(index)))?;
    let post = imb(&|arm| empirical_cond(sub, arm, Some(index)))?;
    let pre_rows = flatten(&pre);
    let post_rows = flatten(&post);
    let rows = pre_rows
        .into_iter()
        .zip(post_rows)
        .map(|((metric, a), (_, b))| BalanceRow { metric, pre: a, post: b })
        .collect();
    Ok(BalanceTable { pre, post, n_pre: full.len(), n_post: sub.len(), rows })
}
