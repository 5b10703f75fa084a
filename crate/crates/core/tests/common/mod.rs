//! Independent oracles shared by the integration suites. Nothing here calls
//! the crate's numerical routines; every value is recomputed from first
//! principles (brute force, nalgebra, closed forms).

#![allow(dead_code)]

use designbound_core::regression::{CovariateMap, OutcomeRow, OutcomeTable};
use designbound_core::sample::{Arm, EmpiricalCond, JointDist};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A random finite population on at most `max_support` points.
pub struct RandomDgp {
    pub joint: JointDist,
    pub table: OutcomeTable,
    pub map: CovariateMap,
    pub p: usize,
}

pub fn random_dgp<R: Rng>(rng: &mut R, max_support: usize) -> Option<RandomDgp> {
    let p = if rng.random::<f64>() < 0.25 { 2 } else { 1 };
    let k = rng.random_range(2..=max_support);
    let mut locations: Vec<Vec<f64>> = Vec::new();
    while locations.len() < k {
        // grid values so that merges and ties between arms happen
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-8..=8) as f64 / 4.0).collect();
        if !locations.contains(&x) {
            locations.push(x);
        }
    }
    let mut atoms = Vec::new();
    for x in &locations {
        for arm in [Arm::Treated, Arm::Untreated] {
            if rng.random::<f64>() < 0.7 {
                atoms.push((x.clone(), arm, rng.random_range(0.05..1.0)));
            }
        }
    }
    let total: f64 = atoms.iter().map(|a| a.2).sum();
    for a in &mut atoms {
        a.2 /= total;
    }
    // renormalise once more so the sum is 1 to rounding
    let s: f64 = atoms.iter().map(|a| a.2).sum();
    if let Some(last) = atoms.last_mut() {
        last.2 += 1.0 - s;
    }
    let joint = JointDist::from_atoms(atoms).ok()?;
    let rows = locations
        .iter()
        .map(|x| OutcomeRow {
            x: x.clone(),
            f0: rng.random_range(-2.0..2.0),
            f1: rng.random_range(-2.0..2.0),
            noise0: None,
            noise1: None,
        })
        .collect();
    let table = OutcomeTable::new(rows).ok()?;
    let map = if p == 2 {
        if rng.random::<bool>() {
            CovariateMap::Identity
        } else {
            CovariateMap::ConstantOnly
        }
    } else {
        match rng.random_range(0..4) {
            0 => CovariateMap::ConstantOnly,
            1 => CovariateMap::Identity,
            2 => CovariateMap::Powers { score: designbound_core::regression::LinearScore::coordinate(), degree: 2 },
            _ => CovariateMap::Strata {
                score: designbound_core::regression::LinearScore::coordinate(),
                cutpoints: vec![-0.6, 0.6],
            },
        }
    };
    Some(RandomDgp { joint, table, map, p })
}

/// Weighted least squares through nalgebra's SVD.
pub fn wls(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j] * w[i].sqrt());
    let t = DVector::from_fn(rows.len(), |i, _| y[i] * w[i].sqrt());
    let svd = x.svd(true, true);
    svd.solve(&t, 1e-12).expect("svd solve").iter().copied().collect()
}

/// Scalar CDF at t.
pub fn cdf_at(g: &EmpiricalCond, t: f64) -> f64 {
    g.atoms().iter().filter(|a| a.location[0] <= t).map(|a| a.mass).sum()
}

pub fn ks_oracle(g1: &EmpiricalCond, g0: &EmpiricalCond) -> f64 {
    g1.atoms()
        .iter()
        .chain(g0.atoms())
        .map(|a| (cdf_at(g1, a.location[0]) - cdf_at(g0, a.location[0])).abs())
        .fold(0.0, f64::max)
}

/// Minimal coupling cost between two equal-size point sets with equal
/// masses, by enumerating every permutation (Heap's algorithm).
pub fn coupling_cost_brute(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum::<f64>() / n as f64;
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// min over ζ of Σ max(0, a_i − b_i'ζ) by enumerating vertices: the
/// objective is convex piecewise linear, so a minimiser sits where rank(B)
/// independent kinks b_i'ζ = a_i are active.
pub fn min_total_slack_vertices(a: &[f64], b: &[Vec<f64>]) -> f64 {
    let m = a.len();
    let k = b[0].len();
    let bm = DMatrix::from_fn(m, k, |i, j| b[i][j]);
    let rank = bm.clone().svd(false, false).rank(1e-10);
    let objective = |z: &DVector<f64>| -> f64 {
        (0..m).map(|i| (a[i] - (0..k).map(|j| b[i][j] * z[j]).sum::<f64>()).max(0.0)).sum()
    };
    let mut best = objective(&DVector::zeros(k));
    let mut subset: Vec<usize> = (0..rank).collect();
    if rank == 0 {
        return best;
    }
    loop {
        let sub = DMatrix::from_fn(rank, k, |i, j| b[subset[i]][j]);
        let rhs = DVector::from_fn(rank, |i, _| a[subset[i]]);
        let svd = sub.clone().svd(true, true);
        if svd.rank(1e-10) == rank {
            if let Ok(z) = svd.solve(&rhs, 1e-12) {
                best = best.min(objective(&z));
            }
        }
        // next combination
        let mut i = rank;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < m - rank + i {
                subset[i] += 1;
                for j in i + 1..rank {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn assert_close(label: &str, got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "{label}: got {got}, want {want} (tol {tol})");
}

/// Random separation instance: scalar supports of at most `max_points`
/// points per arm and between one and four summaries.
pub struct SeparationCase {
    pub g1: EmpiricalCond,
    pub g0: EmpiricalCond,
    pub rset: designbound_core::imbalance::SummarySet,
    pub h: Vec<(f64, f64)>,
}

impl SeparationCase {
    pub fn h_at(&self, x: &[f64]) -> designbound_core::Result<f64> {
        Ok(self.h.iter().find(|(t, _)| *t == x[0]).expect("tabulated").1)
    }

    /// Constraint data (a_i, b_i) of b_i'ζ + ξ_i ≥ a_i, rebuilt here.
    pub fn constraints(&self, sigma: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (g, side) in [(&self.g1, 1.0), (&self.g0, -1.0)] {
            for atom in g.atoms() {
                let r = self.rset.evaluate(&atom.location).unwrap();
                a.push(side * sigma * self.h_at(&atom.location).unwrap());
                b.push(r.iter().map(|v| side * sigma * v).collect());
            }
        }
        (a, b)
    }
}

pub fn separation_case<R: Rng>(rng: &mut R, max_points: usize) -> SeparationCase {
    use designbound_core::imbalance::{NamedSummary, Summary, SummarySet, TablePoint};
    use designbound_core::regression::LinearScore;
    let grid: Vec<f64> = (-6..=6).map(|k| k as f64 / 2.0).collect();
    let pick = |rng: &mut R| {
        let k = rng.random_range(1..=max_points);
        let mut pts: Vec<(f64, f64)> = Vec::new();
        while pts.len() < k {
            let t = grid[rng.random_range(0..grid.len())];
            if pts.iter().all(|p| p.0 != t) {
                pts.push((t, rng.random_range(0.1..1.0)));
            }
        }
        pts
    };
    let p1 = pick(rng);
    let p0 = pick(rng);
    let g1 = EmpiricalCond::from_scalars(Arm::Treated, &p1).unwrap();
    let g0 = EmpiricalCond::from_scalars(Arm::Untreated, &p0).unwrap();
    let mut support: Vec<f64> = p1.iter().chain(&p0).map(|p| p.0).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let nsum = rng.random_range(1..=4);
    let mut items = Vec::new();
    for j in 0..nsum {
        let summary = match (j, rng.random_range(0..4)) {
            (0, _) | (_, 0) => Summary::Constant,
            (_, 1) => Summary::Coordinate { index: 0 },
            (_, 2) => Summary::Score { score: LinearScore::new(rng.random_range(-1.0..1.0), vec![rng.random_range(-2.0..2.0)]) },
            _ => Summary::Table {
                points: support.iter().map(|&t| TablePoint { location: vec![t], value: rng.random_range(-2.0..2.0) }).collect(),
            },
        };
        items.push(NamedSummary { name: format!("r{j}"), summary });
    }
    let h = support.iter().map(|&t| (t, rng.random_range(-3.0..3.0))).collect();
    SeparationCase { g1, g0, rset: SummarySet::new(items), h }
}
