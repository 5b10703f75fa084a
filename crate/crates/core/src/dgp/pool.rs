//! Synthetic lending-style population for the Monte Carlo pipeline.
//!
//! Six covariates with group differences in means, one binary covariate and
//! a binary outcome from a logit with an interaction, so that no linear
//! working model is exact.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dgp::logistic::sigmoid;
use crate::dgp::rng::substream;
use crate::error::Result;
use crate::sample::{Arm, Sample, Unit};

pub const POOL_TREATED: usize = 148;
pub const POOL_UNTREATED: usize = 1336;

/// Stream reserved for the pool so that replication streams never reuse it.
const POOL_STREAM: u64 = u64::MAX;

fn draw_unit<R: Rng + ?Sized>(rng: &mut R, id: usize, arm: Arm) -> Unit {
    let d = arm.indicator();
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    let x1 = n() + 0.8 * d;
    let x2 = n() + 0.5 * d;
    let x3 = n() - 0.4 * d;
    let x4 = 0.5 * x1 + 0.75 * n();
    let x5 = if rng.random::<f64>() < 0.2 + 0.15 * d { 1.0 } else { 0.0 };
    let x6 = 2.0 * rng.random::<f64>() - 1.0 + 0.3 * d;
    let logit = -2.0 + 0.4 * d + 0.8 * x1 + 0.4 * x2 - 0.3 * x3 + 0.5 * x5 + 0.3 * x1 * x2;
    let y = if rng.random::<f64>() < sigmoid(logit) { 1.0 } else { 0.0 };
    Unit::new(format!("{}{id:04}", if d == 1.0 { "T" } else { "C" }), Some(y), vec![x1, x2, x3, x4, x5, x6], arm)
}

/// 148 treated and 1336 untreated units, p = 6, y ∈ {0, 1}.
pub fn synthetic_pool(seed: u64) -> Result<Sample> {
    let mut rng = substream(seed, POOL_STREAM);
    let mut units: Vec<Unit> = Vec::with_capacity(POOL_TREATED + POOL_UNTREATED);
    for k in 0..POOL_TREATED {
        units.push(draw_unit(&mut rng, k, Arm::Treated));
    }
    for k in 0..POOL_UNTREATED {
        units.push(draw_unit(&mut rng, k, Arm::Untreated));
    }
    Sample::new(units, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Units;

    #[test]
    fn sizes_and_determinism() {
        let a = synthetic_pool(11).unwrap();
        assert_eq!((a.arm_count(Arm::Treated), a.arm_count(Arm::Untreated), a.p()), (148, 1336, 6));
        assert_eq!(a.units(), synthetic_pool(11).unwrap().units());
    }
}
