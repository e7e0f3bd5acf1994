//! Multiballs, multiboxes and the fiber statistics `multinumber` and
//! `Multinumber` over finite truncations.
//!
//! Sets are unions of boxes `x mod m^L` in `O^n` at some level `L`; a ball of
//! radius `r <= L` is a coset of `m^r`, i.e. all residues sharing their first
//! `r` digits. Coordinates are used in the order given.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equiv::{partition, EquivError, RelationSpec};
use crate::localfield::{check_budget, Characteristic, FieldError, FieldSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MultiboxError {
    #[error("the set is empty")]
    Empty,
    #[error("points do not form a union of level-{level} boxes")]
    NotBoxUnion { level: u32 },
    #[error("invalid subset: {0}")]
    Invalid(String),
    #[error("point {point} is not in the multibox")]
    PointNotInMultibox { point: String },
    #[error("coordinate {m}: qualifying balls reach the precision limit {precision}")]
    PrecisionInconclusive { m: usize, precision: u32 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Equiv(#[from] EquivError),
}

/// A union of level-`L` boxes in `(O / m^N)^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteSubset {
    spec: FieldSpec,
    arity: usize,
    level: u32,
    boxes: BTreeSet<Vec<u64>>,
}

impl FiniteSubset {
    /// Boxes are given by representatives whose digits at and above `level` are zero.
    pub fn from_boxes(
        spec: FieldSpec,
        arity: usize,
        level: u32,
        boxes: impl IntoIterator<Item = Vec<u64>>,
    ) -> Result<Self, MultiboxError> {
        if arity == 0 {
            return Err(MultiboxError::Invalid("arity must be positive".into()));
        }
        if level > spec.precision() {
            return Err(MultiboxError::Invalid(format!(
                "level {level} exceeds precision {}",
                spec.precision()
            )));
        }
        let bound = spec.p_pow(level);
        let mut set = BTreeSet::new();
        for b in boxes {
            if b.len() != arity || b.iter().any(|&c| c >= bound) {
                return Err(MultiboxError::Invalid(format!("{b:?} is not a level-{level} box of arity {arity}")));
            }
            set.insert(b);
        }
        Ok(FiniteSubset { spec, arity, level, boxes: set })
    }

    /// Full-precision points; rejected unless they fill whole level-`L` boxes.
    pub fn from_points(
        spec: FieldSpec,
        arity: usize,
        level: u32,
        points: impl IntoIterator<Item = Vec<u64>>,
    ) -> Result<Self, MultiboxError> {
        let mut counts: HashMap<Vec<u64>, u128> = HashMap::new();
        let mut seen = BTreeSet::new();
        for x in points {
            if x.len() != arity || x.iter().any(|&c| c >= spec.size()) {
                return Err(MultiboxError::Invalid(format!("{x:?} is not a point of arity {arity}")));
            }
            let b: Vec<u64> = x.iter().map(|&c| spec.truncate_raw(c, level)).collect();
            if seen.insert(x) {
                *counts.entry(b).or_default() += 1;
            }
        }
        let per_box = (spec.p() as u128).pow((spec.precision() - level.min(spec.precision())) * arity as u32);
        if counts.values().any(|&c| c != per_box) {
            return Err(MultiboxError::NotBoxUnion { level });
        }
        Self::from_boxes(spec, arity, level, counts.into_keys())
    }

    /// The boxes whose representative satisfies `pred`.
    pub fn from_predicate(
        spec: FieldSpec,
        arity: usize,
        level: u32,
        mut pred: impl FnMut(&[u64]) -> bool,
    ) -> Result<Self, MultiboxError> {
        let side = spec.p_pow(level);
        let total = (side as u128).pow(arity as u32);
        check_budget(total)?;
        let mut boxes = Vec::new();
        let mut x = vec![0u64; arity];
        for code in 0..total as u64 {
            let mut c = code;
            for xi in x.iter_mut() {
                *xi = c % side;
                c /= side;
            }
            if pred(&x) {
                boxes.push(x.clone());
            }
        }
        Self::from_boxes(spec, arity, level, boxes)
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn boxes(&self) -> &BTreeSet<Vec<u64>> {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Membership of a point given at any precision at least `level`.
    pub fn contains(&self, x: &[u64]) -> bool {
        x.len() == self.arity && self.boxes.contains(&self.truncate(x))
    }

    pub fn truncate(&self, x: &[u64]) -> Vec<u64> {
        x.iter().map(|&c| self.spec.truncate_raw(c, self.level)).collect()
    }

    /// Haar measure, with `O` of mass 1.
    pub fn measure(&self) -> BigRational {
        let den = BigInt::from(self.spec.p()).pow(self.level * self.arity as u32);
        BigRational::new(BigInt::from(self.boxes.len()), den)
    }

    /// Image under the projection to the first `m` coordinates.
    pub fn project(&self, m: usize) -> FiniteSubset {
        assert!(m >= 1 && m <= self.arity, "projection to {m} of {} coordinates", self.arity);
        FiniteSubset {
            spec: self.spec,
            arity: m,
            level: self.level,
            boxes: self.boxes.iter().map(|b| b[..m].to_vec()).collect(),
        }
    }

    /// Reorders coordinates: coordinate `i` of the result is coordinate `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<FiniteSubset, MultiboxError> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.arity).collect::<Vec<_>>() {
            return Err(MultiboxError::Invalid(format!("{perm:?} is not a permutation of 0..{}", self.arity)));
        }
        let boxes = self.boxes.iter().map(|b| perm.iter().map(|&i| b[i]).collect()).collect();
        Ok(FiniteSubset { boxes, ..self.clone() })
    }

    /// The same set described at a finer level.
    pub fn refine(&self, level: u32) -> Result<FiniteSubset, MultiboxError> {
        if level < self.level || level > self.spec.precision() {
            return Err(MultiboxError::Invalid(format!("cannot refine level {} to {level}", self.level)));
        }
        let step = self.spec.p_pow(self.level);
        let lifts = self.spec.p_pow(level - self.level);
        let mut out = BTreeSet::new();
        for b in &self.boxes {
            let mut stack = vec![Vec::with_capacity(self.arity)];
            for &c in b {
                stack = stack
                    .into_iter()
                    .flat_map(|prefix: Vec<u64>| {
                        (0..lifts).map(move |k| {
                            let mut v = prefix.clone();
                            v.push(c + k * step);
                            v
                        })
                    })
                    .collect();
            }
            out.extend(stack);
        }
        Ok(FiniteSubset { spec: self.spec, arity: self.arity, level, boxes: out })
    }

    fn show(&self, x: &[u64]) -> String {
        let parts: Vec<String> = x
            .iter()
            .map(|&r| self.spec.from_repr(r).map(|e| e.to_string()).unwrap_or_default())
            .collect();
        format!("({})", parts.join(", "))
    }
}

/// Exponents `(r_1, ..., r_n)` of a multivolume `(q^-r_1, ..., q^-r_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Multivolume(pub Vec<u32>);

impl Multivolume {
    /// Colexicographic comparison of the volume tuples: the last coordinate
    /// decides first, and a smaller exponent is a larger volume.
    pub fn cmp_volume(&self, other: &Multivolume) -> Ordering {
        for (a, b) in self.0.iter().rev().zip(other.0.iter().rev()) {
            match b.cmp(a) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

impl fmt::Display for Multivolume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Smallest radius `r` such that the residue set contains a ball of radius
/// `r`, with the prefixes of all such balls.
fn max_balls(spec: &FieldSpec, level: u32, fiber: &BTreeSet<u64>) -> (u32, BTreeSet<u64>) {
    for r in 0..=level {
        let full = spec.p_pow(level - r);
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for &w in fiber {
            *counts.entry(spec.truncate_raw(w, r)).or_default() += 1;
        }
        let contained: BTreeSet<u64> = counts.into_iter().filter(|&(_, c)| c == full).map(|(k, _)| k).collect();
        if !contained.is_empty() {
            return (r, contained);
        }
    }
    unreachable!("a nonempty fiber contains its level boxes")
}

fn fibers(set: &BTreeSet<Vec<u64>>) -> BTreeMap<Vec<u64>, BTreeSet<u64>> {
    let mut out: BTreeMap<Vec<u64>, BTreeSet<u64>> = BTreeMap::new();
    for b in set {
        let (last, init) = b.split_last().unwrap();
        out.entry(init.to_vec()).or_default().insert(*last);
    }
    out
}

fn multibox_rec(spec: &FieldSpec, level: u32, set: &BTreeSet<Vec<u64>>) -> (Vec<u32>, BTreeSet<Vec<u64>>) {
    let by_prefix = fibers(set);
    let balls: BTreeMap<&Vec<u64>, (u32, BTreeSet<u64>)> =
        by_prefix.iter().map(|(k, f)| (k, max_balls(spec, level, f))).collect();
    let rn = balls.values().map(|(r, _)| *r).min().unwrap();
    let (mut exps, base) = if by_prefix.keys().next().is_some_and(|k| k.is_empty()) {
        (Vec::new(), BTreeSet::from([Vec::new()]))
    } else {
        let reach: BTreeSet<Vec<u64>> =
            balls.iter().filter(|(_, (r, _))| *r == rn).map(|(k, _)| (*k).clone()).collect();
        multibox_rec(spec, level, &reach)
    };
    exps.push(rn);
    let mut mb = BTreeSet::new();
    for prefix in &base {
        let (_, pre) = &balls[prefix];
        for &w in &by_prefix[prefix] {
            if pre.contains(&spec.truncate_raw(w, rn)) {
                let mut v = prefix.clone();
                v.push(w);
                mb.insert(v);
            }
        }
    }
    (exps, mb)
}

/// `MB(X)` with its multivolume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiboxReport {
    pub mb: FiniteSubset,
    pub multivolume: Multivolume,
    /// `r_i` equals the ambient precision: a singleton at this precision,
    /// indistinguishable from an infinite exponent.
    pub precision_limited: Vec<bool>,
}

pub fn multibox(x: &FiniteSubset) -> Result<MultiboxReport, MultiboxError> {
    if x.is_empty() {
        return Err(MultiboxError::Empty);
    }
    let (exps, boxes) = multibox_rec(&x.spec, x.level, &x.boxes);
    let precision_limited = exps.iter().map(|&r| r == x.spec.precision()).collect();
    Ok(MultiboxReport {
        mb: FiniteSubset { boxes, ..x.clone() },
        multivolume: Multivolume(exps),
        precision_limited,
    })
}

/// The multivolume of `y` if it is a multiball.
pub fn is_multiball(y: &FiniteSubset) -> Option<Multivolume> {
    if y.is_empty() {
        return None;
    }
    fn rec(spec: &FieldSpec, level: u32, set: &BTreeSet<Vec<u64>>) -> Option<Vec<u32>> {
        let by_prefix = fibers(set);
        let mut radius = None;
        for f in by_prefix.values() {
            let (r, pre) = max_balls(spec, level, f);
            let is_ball = pre.len() == 1 && f.len() as u64 == spec.p_pow(level - r);
            if !is_ball || radius.is_some_and(|r0| r0 != r) {
                return None;
            }
            radius = Some(r);
        }
        let mut exps = if by_prefix.keys().next().is_some_and(|k| k.is_empty()) {
            Vec::new()
        } else {
            rec(spec, level, &by_prefix.keys().cloned().collect())?
        };
        exps.push(radius?);
        Some(exps)
    }
    rec(&y.spec, y.level, &y.boxes).map(Multivolume)
}

impl MultiboxReport {
    fn fiber(&self, x: &[u64], m: usize) -> Result<BTreeSet<u64>, MultiboxError> {
        let mb = &self.mb;
        if m == 0 || m > mb.arity {
            return Err(MultiboxError::Invalid(format!("coordinate index {m} out of 1..={}", mb.arity)));
        }
        if !mb.contains(x) {
            return Err(MultiboxError::PointNotInMultibox { point: mb.show(x) });
        }
        let x = mb.truncate(x);
        Ok(mb.boxes.iter().filter(|b| b[..m - 1] == x[..m - 1]).map(|b| b[m - 1]).collect())
    }

    /// Number of maximal-volume balls contained in the fiber `X(x, m)`.
    pub fn multinumber(&self, x: &[u64], m: usize) -> Result<u64, MultiboxError> {
        let f = self.fiber(x, m)?;
        Ok(max_balls(&self.mb.spec, self.mb.level, &f).1.len() as u64)
    }

    /// Number of balls of the smallest volume that meet the fiber `X(x, m)`
    /// without being contained in it; 0 when every meeting ball is contained.
    pub fn multinumber_upper(&self, x: &[u64], m: usize) -> Result<u64, MultiboxError> {
        let f = self.fiber(x, m)?;
        let (spec, level) = (&self.mb.spec, self.mb.level);
        for r in (0..level).rev() {
            let full = spec.p_pow(level - r);
            let mut counts: HashMap<u64, u64> = HashMap::new();
            for &w in &f {
                *counts.entry(spec.truncate_raw(w, r)).or_default() += 1;
            }
            let qualifying = counts.values().filter(|&&c| c < full).count() as u64;
            if qualifying > 0 {
                if r + 1 == level && level == spec.precision() {
                    return Err(MultiboxError::PrecisionInconclusive { m, precision: level });
                }
                return Ok(qualifying);
            }
        }
        Ok(0)
    }
}

pub fn multinumber(x: &FiniteSubset, point: &[u64], m: usize) -> Result<u64, MultiboxError> {
    multibox(x)?.multinumber(point, m)
}

pub fn multinumber_upper(x: &FiniteSubset, point: &[u64], m: usize) -> Result<u64, MultiboxError> {
    multibox(x)?.multinumber_upper(point, m)
}

/// Largest product of `Multinumber_m` over classes and points at one `(p, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundRow {
    pub p: u64,
    pub n: u32,
    pub classes: usize,
    pub max_product: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundScan {
    pub rows: Vec<BoundRow>,
    /// The empirical bound `Q`: the maximum over all rows.
    pub q: u64,
    /// Per-prime maxima over the n-range, in the order of the primes.
    pub per_prime: Vec<(u64, u64)>,
    /// Some `n` has maxima strictly increasing along the primes.
    pub growth_warning: bool,
}

/// Extra precision `bound_scan` may add when a partition is resolved only at the ambient precision.
pub const MAX_EXTRA_PRECISION: u32 = 2;

/// Scans every class of the relation at each `(p, n)`, at precision `n + 1`
/// or finer if the partition needs it.
pub fn bound_scan(
    rel: &RelationSpec,
    case: Characteristic,
    primes: &[u64],
    n_range: std::ops::RangeInclusive<u32>,
) -> Result<BoundScan, MultiboxError> {
    let mut rows = Vec::new();
    for &p in primes {
        for n in n_range.clone() {
            let mut spec = FieldSpec::new(case, p, n + 1)?;
            let mut part = partition(rel, &spec, &[n as i64])?;
            // A partition resolved only at the ambient precision may be a truncation artifact.
            while part.level == spec.precision() && spec.precision() < n + 1 + MAX_EXTRA_PRECISION {
                spec = spec.with_precision(spec.precision() + 1)?;
                part = partition(rel, &spec, &[n as i64])?;
            }
            let mut max_product = 0;
            for class in &part.classes {
                let x = FiniteSubset::from_boxes(spec, part.arity, part.level, class.iter().cloned())?;
                let report = multibox(&x)?;
                for b in report.mb.boxes() {
                    let mut prod = 1u64;
                    for m in 1..=part.arity {
                        prod *= report.multinumber_upper(b, m)?;
                    }
                    max_product = max_product.max(prod);
                }
            }
            rows.push(BoundRow { p, n, classes: part.classes.len(), max_product });
        }
    }
    let per_prime: Vec<(u64, u64)> = primes
        .iter()
        .map(|&p| (p, rows.iter().filter(|r| r.p == p).map(|r| r.max_product).max().unwrap_or(0)))
        .collect();
    let growth_warning = primes.len() >= 2
        && n_range.clone().any(|n| {
            let seq: Vec<u64> = primes
                .iter()
                .filter_map(|&p| rows.iter().find(|r| r.p == p && r.n == n).map(|r| r.max_product))
                .collect();
            seq.windows(2).all(|w| w[1] > w[0])
        });
    let q = rows.iter().map(|r| r.max_product).max().unwrap_or(0);
    Ok(BoundScan { rows, q, per_prime, growth_warning })
}
