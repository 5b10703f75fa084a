//! Replication runner: determinism, order-independent merging and the
//! bias pattern matching is meant to produce.

use designbound_core::dgp::{run_replication, run_simulation, synthetic_pool, SimPlan, SimSpec, SimTable};
use designbound_core::Error;
use rayon::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn single_replication_is_bit_identical_across_runs() {
    let pool = synthetic_pool(3).unwrap();
    let plan = SimPlan::new(50, 100, 1, 42);
    let a = run_simulation(&pool, &plan).unwrap();
    let b = run_simulation(&pool, &plan).unwrap();
    assert_eq!(a, b);
    let bits = |t: &SimTable| -> Vec<u64> {
        t.rows.iter().flat_map(|r| r.columns()).filter_map(|(_, v)| v.map(f64::to_bits)).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn parallel_merge_matches_sequential() {
    let pool = synthetic_pool(3).unwrap();
    let plan = SimPlan::new(30, 60, 12, 9);
    let seq = run_simulation(&pool, &plan).unwrap();
    // reversed completion order on purpose
    let mut outcomes: Vec<_> = (0..12u64).into_par_iter().map(|r| run_replication(&pool, &plan, r).unwrap()).collect();
    outcomes.reverse();
    assert_eq!(SimTable::from_outcomes(outcomes), seq);
}

#[test]
fn more_treated_than_controls_is_rejected() {
    let pool = synthetic_pool(3).unwrap();
    let plan = SimPlan::new(100, 50, 1, 1);
    assert!(matches!(run_simulation(&pool, &plan), Err(Error::Validation(_))));
}

#[test]
fn matching_shrinks_median_bias_for_short_and_linear_models() {
    let pool = synthetic_pool(2024).unwrap();
    let mut plan = SimPlan::new(50, 100, 20, 5);
    plan.specs = vec![SimSpec::A, SimSpec::B];
    let table = run_simulation(&pool, &plan).unwrap();
    for spec in [SimSpec::A, SimSpec::B] {
        let rows: Vec<_> = table.rows_for(spec).collect();
        assert!(rows.len() >= 18, "{} rows for {}", rows.len(), spec.name());
        let pre = median(rows.iter().map(|r| r.pre.bias.abs()).collect());
        let post = median(rows.iter().map(|r| r.post.bias.abs()).collect());
        assert!(post < pre, "{}: median |bias| {pre} before, {post} after", spec.name());
    }
}

#[test]
fn every_reported_bound_covers_the_exact_bias() {
    let pool = synthetic_pool(11).unwrap();
    let plan = SimPlan::new(40, 80, 5, 13);
    let table = run_simulation(&pool, &plan).unwrap();
    for r in &table.rows {
        for side in [&r.pre, &r.post] {
            for e in &side.bounds.entries {
                if let Some(b) = e.bound {
                    assert!(b >= side.bias.abs() - 1e-10, "{} {:?}: {b} < {}", r.spec.name(), e.family, side.bias.abs());
                }
            }
        }
    }
}
