//! Units, samples, outcome-blind design views, subsample handles and the
//! per-arm empirical distributions everything else is computed from.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::CovariateMap;

/// Treatment arm. Serialized as the 0/1 indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Arm {
    Untreated,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Untreated, Arm::Treated];

    pub fn indicator(self) -> f64 {
        match self {
            Arm::Untreated => 0.0,
            Arm::Treated => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        self.into()
    }
}

impl From<Arm> for u8 {
    fn from(a: Arm) -> u8 {
        match a {
            Arm::Untreated => 0,
            Arm::Treated => 1,
        }
    }
}

impl TryFrom<u8> for Arm {
    type Error = Error;
    fn try_from(v: u8) -> Result<Arm> {
        match v {
            0 => Ok(Arm::Untreated),
            1 => Ok(Arm::Treated),
            other => Err(Error::Validation(format!("treatment indicator must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub y: Option<f64>,
    pub x: Vec<f64>,
    pub arm: Arm,
}

impl Unit {
    pub fn new(id: impl Into<String>, y: Option<f64>, x: Vec<f64>, arm: Arm) -> Self {
        Unit { id: id.into(), y, x, arm }
    }
}

/// Read access shared by full samples and subsample handles.
pub trait Units {
    fn len(&self) -> usize;
    fn unit(&self, k: usize) -> &Unit;
    fn p(&self) -> usize;
    fn design_only(&self) -> bool;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn iter_units(&self) -> UnitIter<'_, Self>
    where
        Self: Sized,
    {
        UnitIter { src: self, k: 0 }
    }

    fn arm_count(&self, arm: Arm) -> usize {
        (0..self.len()).filter(|&k| self.unit(k).arm == arm).count()
    }

    /// Outcomes in unit order; errors on design-only data.
    fn outcomes(&self) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|k| {
                let u = self.unit(k);
                u.y.ok_or_else(|| Error::MissingOutcome(format!("unit {} has no y (design-only sample)", u.id)))
            })
            .collect()
    }

    fn require_both_arms(&self) -> Result<()> {
        for arm in Arm::BOTH {
            if self.arm_count(arm) == 0 {
                return Err(Error::EmptyArm(arm.code()));
            }
        }
        Ok(())
    }
}

pub struct UnitIter<'a, U: Units> {
    src: &'a U,
    k: usize,
}

impl<'a, U: Units> Iterator for UnitIter<'a, U> {
    type Item = &'a Unit;
    fn next(&mut self) -> Option<&'a Unit> {
        if self.k < self.src.len() {
            self.k += 1;
            Some(self.src.unit(self.k - 1))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    units: Vec<Unit>,
    p: usize,
    design_only: bool,
    by_id: BTreeMap<String, usize>,
}

impl Sample {
    /// Validates ids, dimensions and finiteness. Missing outcomes are only
    /// accepted when `design_only` is set.
    pub fn new(units: Vec<Unit>, design_only: bool) -> Result<Self> {
        let first = units.first().ok_or(Error::NoUnits)?;
        let p = first.x.len();
        if units.len() < 2 {
            return Err(Error::Validation("a sample needs at least two units".into()));
        }
        let mut by_id = BTreeMap::new();
        for (k, u) in units.iter().enumerate() {
            if u.x.len() != p {
                return Err(Error::Validation(format!(
                    "unit {} has {} covariates, expected {p}",
                    u.id,
                    u.x.len()
                )));
            }
            if u.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("unit {} has a non-finite covariate", u.id)));
            }
            match u.y {
                Some(y) if !y.is_finite() => {
                    return Err(Error::Validation(format!("unit {} has a non-finite outcome", u.id)))
                }
                None if !design_only => {
                    return Err(Error::MissingOutcome(format!(
                        "unit {} has no y; load with the design-only flag to allow this",
                        u.id
                    )))
                }
                _ => {}
            }
            if by_id.insert(u.id.clone(), k).is_some() {
                return Err(Error::Validation(format!("duplicate unit id {}", u.id)));
            }
        }
        Ok(Sample { units, p, design_only, by_id })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// The outcome-blind view handed to design-phase code.
    pub fn redacted(&self) -> DesignView<'_> {
        DesignView { sample: self }
    }

    /// Same units with outcomes permuted; used to show design code ignores y.
    pub fn with_outcomes(&self, ys: &[Option<f64>]) -> Result<Sample> {
        if ys.len() != self.units.len() {
            return Err(Error::Dimension("one outcome per unit required".into()));
        }
        let units = self
            .units
            .iter()
            .zip(ys)
            .map(|(u, y)| Unit { y: *y, ..u.clone() })
            .collect();
        Sample::new(units, self.design_only)
    }
}

impl Units for Sample {
    fn len(&self) -> usize {
        self.units.len()
    }
    fn unit(&self, k: usize) -> &Unit {
        &self.units[k]
    }
    fn p(&self) -> usize {
        self.p
    }
    fn design_only(&self) -> bool {
        self.design_only
    }
}

/// A sample with outcomes hidden. Subsamples can only be built from here,
/// so a construction rule cannot depend on y.
#[derive(Debug, Clone, Copy)]
pub struct DesignView<'a> {
    sample: &'a Sample,
}

impl<'a> DesignView<'a> {
    pub fn len(&self) -> usize {
        self.sample.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.units.is_empty()
    }

    pub fn p(&self) -> usize {
        self.sample.p
    }

    pub fn id(&self, k: usize) -> &'a str {
        &self.sample.units[k].id
    }

    pub fn x(&self, k: usize) -> &'a [f64] {
        &self.sample.units[k].x
    }

    pub fn arm(&self, k: usize) -> Arm {
        self.sample.units[k].arm
    }

    pub fn arm_positions(&self, arm: Arm) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.arm(k) == arm).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.sample.position(id)
    }

    pub fn full(&self) -> SubsampleHandle<'a> {
        SubsampleHandle {
            parent: self.sample,
            members: (0..self.len()).collect(),
            provenance: Provenance::Full,
        }
    }

    /// Handle over the given parent positions, kept in the order supplied.
    pub fn subsample(&self, members: Vec<usize>, provenance: Provenance) -> Result<SubsampleHandle<'a>> {
        let mut seen = BTreeSet::new();
        for &m in &members {
            if m >= self.len() {
                return Err(Error::Contract(format!("member position {m} outside the parent sample")));
            }
            if !seen.insert(m) {
                return Err(Error::Contract(format!("unit {} listed twice", self.id(m))));
            }
        }
        if members.is_empty() {
            return Err(Error::NoUnits);
        }
        Ok(SubsampleHandle { parent: self.sample, members, provenance })
    }

    /// Handle over an explicit id list (for example read from a file).
    pub fn subsample_by_ids<S: AsRef<str>>(&self, ids: &[S], provenance: Provenance) -> Result<SubsampleHandle<'a>> {
        let members = ids
            .iter()
            .map(|id| {
                self.position(id.as_ref())
                    .ok_or_else(|| Error::Validation(format!("subsample id {} is not in the sample", id.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        self.subsample(members, provenance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub treated_id: String,
    pub control_id: String,
    pub distance: f64,
}

/// How a subsample came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Full,
    Matched { pairs: Vec<MatchedPair>, dropped_treated: Vec<String> },
    Trimmed { lo: f64, hi: f64 },
    Listed { source: String },
}

#[derive(Debug, Clone)]
pub struct SubsampleHandle<'a> {
    parent: &'a Sample,
    members: Vec<usize>,
    provenance: Provenance,
}

impl<'a> SubsampleHandle<'a> {
    pub fn parent(&self) -> &'a Sample {
        self.parent
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn member_ids(&self) -> Vec<&'a str> {
        self.members.iter().map(|&m| self.parent.units[m].id.as_str()).collect()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

impl Units for SubsampleHandle<'_> {
    fn len(&self) -> usize {
        self.members.len()
    }
    fn unit(&self, k: usize) -> &Unit {
        &self.parent.units[self.members[k]]
    }
    fn p(&self) -> usize {
        self.parent.p
    }
    fn design_only(&self) -> bool {
        self.parent.design_only
    }
}

/// One support point of a discrete distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Vec<f64>,
    pub mass: f64,
}

pub(crate) fn cmp_location(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Distribution of covariates (or of an index) within one arm: finitely many
/// atoms sorted by location, exact duplicates merged, masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCond {
    arm: Arm,
    atoms: Vec<Atom>,
}

impl EmpiricalCond {
    /// Builds from weighted points. Weights are normalized; zero-weight
    /// points are dropped; bitwise-equal locations are merged.
    pub fn from_points(arm: Arm, points: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = points.first().map(|p| p.0.len()).ok_or(Error::EmptyArm(arm.code()))?;
        let mut total = 0.0;
        for (loc, w) in &points {
            if loc.len() != dim {
                return Err(Error::Dimension("locations of mixed dimension".into()));
            }
            if loc.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("non-finite location".into()));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Validation(format!("invalid mass {w}")));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::EmptyArm(arm.code()));
        }
        let mut pts: Vec<(Vec<f64>, f64)> = points.into_iter().filter(|(_, w)| *w > 0.0).collect();
        pts.sort_by(|a, b| cmp_location(&a.0, &b.0));
        let mut atoms: Vec<Atom> = Vec::with_capacity(pts.len());
        for (loc, w) in pts {
            match atoms.last_mut() {
                Some(last) if cmp_location(&last.location, &loc) == Ordering::Equal => last.mass += w,
                _ => atoms.push(Atom { location: loc, mass: w }),
            }
        }
        for a in &mut atoms {
            a.mass /= total;
        }
        Ok(EmpiricalCond { arm, atoms })
    }

    pub fn from_scalars(arm: Arm, points: &[(f64, f64)]) -> Result<Self> {
        Self::from_points(arm, points.iter().map(|&(t, w)| (alloc::vec![t], w)).collect())
    }

    pub fn point_mass(arm: Arm, location: Vec<f64>) -> Self {
        EmpiricalCond { arm, atoms: alloc::vec![Atom { location, mass: 1.0 }] }
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].location.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.dim() == 1
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// (location, mass) pairs for one-dimensional distributions.
    pub fn scalar_points(&self) -> Result<Vec<(f64, f64)>> {
        if !self.is_scalar() {
            return Err(Error::Dimension(format!(
                "this metric needs scalar locations, got dimension {}; reduce to an index first",
                self.dim()
            )));
        }
        Ok(self.atoms.iter().map(|a| (a.location[0], a.mass)).collect())
    }

    pub fn mass_at(&self, location: &[f64]) -> f64 {
        self.atoms
            .binary_search_by(|a| cmp_location(&a.location, location))
            .map_or(0.0, |k| self.atoms[k].mass)
    }

    pub fn expect(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.mass * f(&a.location)).sum()
    }

    /// Distribution of a scalar function of the location.
    pub fn pushforward(&self, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        Self::from_points(
            self.arm,
            self.atoms.iter().map(|a| (alloc::vec![f(&a.location)], a.mass)).collect(),
        )
    }
}

/// Sorted union of two supports.
pub fn union_support(a: &EmpiricalCond, b: &EmpiricalCond) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(a.atoms.len() + b.atoms.len());
    let (mut i, mut j) = (0, 0);
    while i < a.atoms.len() || j < b.atoms.len() {
        let next = match (a.atoms.get(i), b.atoms.get(j)) {
            (Some(x), Some(y)) => match cmp_location(&x.location, &y.location) {
                Ordering::Less => {
                    i += 1;
                    &x.location
                }
                Ordering::Greater => {
                    j += 1;
                    &y.location
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    &x.location
                }
            },
            (Some(x), None) => {
                i += 1;
                &x.location
            }
            (None, Some(y)) => {
                j += 1;
                &y.location
            }
            (None, None) => unreachable!(),
        };
        out.push(next.clone());
    }
    out
}

fn unit_location(u: &Unit, index: Option<&CovariateMap>) -> Result<Vec<f64>> {
    match index {
        None => Ok(u.x.clone()),
        Some(map) => Ok(alloc::vec![map.scalar_index(&u.x)?]),
    }
}

/// Empirical distribution of covariates (or of an index) for one arm, equal
/// mass per unit.
pub fn empirical_cond<U: Units + ?Sized>(s: &U, arm: Arm, index: Option<&CovariateMap>) -> Result<EmpiricalCond> {
    let mut pts = Vec::new();
    for k in 0..s.len() {
        let u = s.unit(k);
        if u.arm == arm {
            pts.push((unit_location(u, index)?, 1.0));
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptyArm(arm.code()));
    }
    EmpiricalCond::from_points(arm, pts)
}

/// Joint distribution of (location, arm) on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDist {
    pub p_treated: f64,
    pub g1: EmpiricalCond,
    pub g0: EmpiricalCond,
}

impl JointDist {
    pub fn new(p_treated: f64, g1: EmpiricalCond, g0: EmpiricalCond) -> Result<Self> {
        if !(p_treated > 0.0 && p_treated < 1.0) {
            return Err(Error::Validation(format!("treated share must lie in (0,1), got {p_treated}")));
        }
        if g1.arm != Arm::Treated || g0.arm != Arm::Untreated {
            return Err(Error::Contract("arm labels of the conditionals are swapped".into()));
        }
        if g1.dim() != g0.dim() {
            return Err(Error::Dimension("arms have locations of different dimension".into()));
        }
        Ok(JointDist { p_treated, g1, g0 })
    }

    /// From joint atoms (location, arm, probability).
    pub fn from_atoms(atoms: Vec<(Vec<f64>, Arm, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.2).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("joint probabilities sum to {total}")));
        }
        let mut split = [Vec::new(), Vec::new()];
        for (loc, arm, w) in atoms {
            split[arm.code() as usize].push((loc, w));
        }
        let p1: f64 = split[1].iter().map(|a| a.1).sum();
        let [s0, s1] = split;
        let g1 = EmpiricalCond::from_points(Arm::Treated, s1)?;
        let g0 = EmpiricalCond::from_points(Arm::Untreated, s0)?;
        JointDist::new(p1, g1, g0)
    }

    /// Empirical joint of a sample or subsample.
    pub fn from_units<U: Units + ?Sized>(s: &U, index: Option<&CovariateMap>) -> Result<Self> {
        let g1 = empirical_cond(s, Arm::Treated, index)?;
        let g0 = empirical_cond(s, Arm::Untreated, index)?;
        let n1 = s.arm_count(Arm::Treated) as f64;
        JointDist::new(n1 / s.len() as f64, g1, g0)
    }

    pub fn arm(&self, arm: Arm) -> &EmpiricalCond {
        match arm {
            Arm::Treated => &self.g1,
            Arm::Untreated => &self.g0,
        }
    }

    pub fn arm_share(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.p_treated,
            Arm::Untreated => 1.0 - self.p_treated,
        }
    }

    /// Every (location, arm, joint probability) atom.
    pub fn joint_atoms(&self) -> impl Iterator<Item = (&[f64], Arm, f64)> + '_ {
        Arm::BOTH.into_iter().flat_map(move |arm| {
            let share = self.arm_share(arm);
            self.arm(arm).atoms().iter().map(move |a| (a.location.as_slice(), arm, share * a.mass))
        })
    }

    pub fn pushforward(&self, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        JointDist::new(self.p_treated, self.g1.pushforward(&mut f)?, self.g0.pushforward(&mut f)?)
    }
}
