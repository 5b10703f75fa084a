//! Twelve treated and twelve untreated units on a scalar covariate with
//! y = x, so the treatment effect is zero and every nonzero regression
//! coefficient on D is pure bias.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::sample::{Arm, MatchedPair, Sample, Unit};

const UNTREATED: [f64; 12] = [-2.32, -1.96, -1.36, -0.91, 0.11, 0.14, 0.42, 0.55, 0.76, 0.83, 1.02, 1.52];
const TREATED: [f64; 12] = [-1.35, -0.91, 0.16, 0.33, 0.44, 0.70, 0.75, 0.92, 1.95, 2.16, 2.22, 3.19];

/// Hand-built pairs with better balance than the full sample.
const PAIRS: [(&str, &str); 6] = [("T1", "U3"), ("T2", "U4"), ("T3", "U6"), ("T4", "U7"), ("T5", "U8"), ("T7", "U9")];

#[derive(Debug, Clone)]
pub struct Example2 {
    pub sample: Sample,
    /// Ids of the stated subsample, treated and untreated.
    pub subsample_ids: Vec<String>,
    pub pairs: Vec<MatchedPair>,
}

pub fn example2_dataset() -> Result<Example2> {
    let mut units = Vec::with_capacity(24);
    for (k, &x) in UNTREATED.iter().enumerate() {
        units.push(Unit::new(format!("U{}", k + 1), Some(x), vec![x], Arm::Untreated));
    }
    for (k, &x) in TREATED.iter().enumerate() {
        units.push(Unit::new(format!("T{}", k + 1), Some(x), vec![x], Arm::Treated));
    }
    let sample = Sample::new(units, false)?;
    let x_of = |id: &str| sample.units()[sample.position(id).expect("listed id")].x[0];
    let pairs: Vec<MatchedPair> = PAIRS
        .iter()
        .map(|&(t, c)| MatchedPair { treated_id: t.into(), control_id: c.into(), distance: (x_of(t) - x_of(c)).abs() })
        .collect();
    let subsample_ids = PAIRS.iter().flat_map(|&(t, c)| [String::from(t), String::from(c)]).collect();
    Ok(Example2 { sample, subsample_ids, pairs })
}
