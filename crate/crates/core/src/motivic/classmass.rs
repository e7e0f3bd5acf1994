//! Class-mass identity: each equivalence class carries a step function of
//! total mass 1, so integrating over the domain counts the classes.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::equiv::{count_classes, partition, RelationSpec};
use crate::localfield::{Characteristic, FieldSpec};
use crate::multibox::{multibox, FiniteSubset, MultiboxReport};
use crate::poly::rational_str;

use super::integrate::{haar_integrate_with, qpow};
use super::MotivicError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassCase {
    /// Finite exponents: the mass is a Haar integral.
    Integral,
    /// Every exponent sits at the precision limit: the class is a single
    /// point at this scale and is counted directly.
    Counted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMass {
    pub class_index: usize,
    pub exponents: Vec<u32>,
    pub boxes: usize,
    #[serde(with = "rational_str")]
    pub integral: BigRational,
    pub case: MassCase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMassReport {
    pub p: u64,
    pub case: Characteristic,
    pub z: Vec<i64>,
    pub precision: u32,
    pub classes: Vec<ClassMass>,
    pub all_one: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountViaIntegral {
    #[serde(with = "rational_str")]
    pub integral: BigRational,
    pub count: u64,
    pub matches: bool,
}

/// Per-box data of `Phi = q^(sum f) / (d * #D)` on `MB(X)`.
struct MassData<'a> {
    report: &'a MultiboxReport,
    /// Coordinate `m` values of `MB(X)` over each prefix of length `m - 1`.
    fibers: HashMap<(usize, Vec<u64>), Vec<u64>>,
}

impl<'a> MassData<'a> {
    fn new(report: &'a MultiboxReport) -> Self {
        let mut fibers: HashMap<(usize, Vec<u64>), Vec<u64>> = HashMap::new();
        for b in report.mb.boxes() {
            for m in 1..=b.len() {
                fibers.entry((m, b[..m - 1].to_vec())).or_default().push(b[m - 1]);
            }
        }
        for v in fibers.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        MassData { report, fibers }
    }

    /// `#D_m(y)`: the residues `ac(y_m - w)` over fiber points `w` with
    /// `ord(y_m - w) = f_m - 1`, together with 0.
    fn residue_count(&self, y: &[u64], m: usize) -> u64 {
        let spec = self.report.mb.spec();
        let f = self.report.multivolume.0[m - 1];
        let mut d = BTreeSet::from([0u64]);
        if f > 0 {
            for &w in &self.fibers[&(m, y[..m - 1].to_vec())] {
                let diff = spec.sub_raw(y[m - 1], w);
                if spec.ord_raw(diff) == Some(f - 1) {
                    d.insert(spec.ac_raw(diff));
                }
            }
        }
        d.len() as u64
    }

    fn phi(&self, y: &[u64]) -> Result<BigRational, MotivicError> {
        let spec = self.report.mb.spec();
        let f = &self.report.multivolume.0;
        let mut denom = 1u64;
        for m in 1..=y.len() {
            let d = if f[m - 1] == 0 { 1 } else { self.report.multinumber_upper(y, m)? };
            if d == 0 {
                return Err(MotivicError::Invalid(format!("coordinate {m} has no meeting ball outside the fiber")));
            }
            denom *= d * self.residue_count(y, m);
        }
        let sum_f: i64 = f.iter().map(|&e| e as i64).sum();
        Ok(qpow(spec.p(), sum_f) / BigRational::from_integer(BigInt::from(denom)))
    }
}

fn integral_over_multibox(report: &MultiboxReport) -> Result<BigRational, MotivicError> {
    let data = MassData::new(report);
    let mut cache: HashMap<Vec<u64>, BigRational> = HashMap::new();
    haar_integrate_with(&report.mb, |_, x| {
        let b = report.mb.truncate(x);
        if let Some(v) = cache.get(&b) {
            return Ok(v.clone());
        }
        let v = data.phi(&b)?;
        cache.insert(b, v.clone());
        Ok(v)
    })
}

/// `int_{MB(X)} Phi` for one class given as a finite union of boxes.
///
/// Exponents at the precision limit are rejected; use `class_mass_check`,
/// which escalates precision, for classes coming from a relation.
pub fn class_mass(x: &FiniteSubset) -> Result<BigRational, MotivicError> {
    let report = multibox(x)?;
    if report.precision_limited.iter().any(|&f| f) {
        return Err(MotivicError::PrecisionInconclusive(format!(
            "multivolume exponents {} reach precision {}",
            report.multivolume,
            x.spec().precision()
        )));
    }
    integral_over_multibox(&report)
}

fn masses(rel: &RelationSpec, spec: &FieldSpec, z: &[i64]) -> Result<(Vec<ClassMass>, bool), MotivicError> {
    let part = partition(rel, spec, z)?;
    let mut out = Vec::with_capacity(part.classes.len());
    let mut limited = false;
    for (i, class) in part.classes.iter().enumerate() {
        let x = FiniteSubset::from_boxes(*spec, part.arity, part.level, class.iter().cloned())?;
        let report = multibox(&x)?;
        let flags = &report.precision_limited;
        let (integral, case) = if flags.iter().all(|&f| f) {
            limited = true;
            (BigRational::one(), MassCase::Counted)
        } else if flags.iter().any(|&f| f) {
            return Err(MotivicError::UnboundedExponent { class: i });
        } else {
            (integral_over_multibox(&report)?, MassCase::Integral)
        };
        out.push(ClassMass {
            class_index: i,
            exponents: report.multivolume.0.clone(),
            boxes: class.len(),
            integral,
            case,
        });
    }
    Ok((out, limited))
}

/// Per-class masses at precision `N`; if any exponent sits at the precision
/// limit the whole computation is repeated at `N + 2` before classes are
/// treated as points (all coordinates limited) or rejected (some limited).
pub fn class_mass_check(rel: &RelationSpec, spec: &FieldSpec, z: &[i64]) -> Result<ClassMassReport, MotivicError> {
    let mut used = *spec;
    let classes = match masses(rel, spec, z) {
        Ok((c, false)) => c,
        Ok((_, true)) | Err(MotivicError::UnboundedExponent { .. }) => {
            used = spec.with_precision(spec.precision() + 2)?;
            masses(rel, &used, z)?.0
        }
        Err(e) => return Err(e),
    };
    let all_one = classes.iter().all(|c| c.integral.is_one());
    Ok(ClassMassReport {
        p: spec.p(),
        case: spec.case(),
        z: z.to_vec(),
        precision: used.precision(),
        classes,
        all_one,
    })
}

/// Sum of the per-class masses, compared with the class count.
pub fn count_via_integral(rel: &RelationSpec, spec: &FieldSpec, z: &[i64]) -> Result<CountViaIntegral, MotivicError> {
    let report = class_mass_check(rel, spec, z)?;
    let integral = report.classes.iter().fold(BigRational::zero(), |acc, c| acc + &c.integral);
    let count = count_classes(rel, spec, z)?.count;
    let matches = integral == BigRational::from_integer(BigInt::from(count));
    Ok(CountViaIntegral { integral, count, matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::SymbolTable;
    use crate::poly::rat;

    #[test]
    fn two_balls_in_one() {
        // Residues 1 and 4 mod 9: two m^2-balls inside the m-ball 1 + m.
        let spec = FieldSpec::mixed(3, 3).unwrap();
        let x = FiniteSubset::from_boxes(spec, 1, 2, [vec![1], vec![4]]).unwrap();
        let report = multibox(&x).unwrap();
        assert_eq!(report.multivolume.0, vec![2]);
        let data = MassData::new(&report);
        assert_eq!(data.residue_count(&[1], 1), 2);
        assert_eq!(report.multinumber_upper(&[1], 1).unwrap(), 1);
        assert_eq!(class_mass(&x).unwrap(), rat(1));
    }

    #[test]
    fn whole_ring_and_single_ball() {
        let spec = FieldSpec::mixed(3, 3).unwrap();
        let all = FiniteSubset::from_predicate(spec, 1, 0, |_| true).unwrap();
        assert_eq!(class_mass(&all).unwrap(), rat(1));
        let ball = FiniteSubset::from_boxes(spec, 1, 2, [vec![5]]).unwrap();
        assert_eq!(class_mass(&ball).unwrap(), rat(1));
    }

    #[test]
    fn ball_relation_counts() {
        let rel = RelationSpec::ball(1).unwrap();
        let spec = FieldSpec::mixed(3, 3).unwrap();
        let report = class_mass_check(&rel, &spec, &[2]).unwrap();
        assert!(report.all_one);
        assert_eq!(report.classes.len(), 9);
        let c = count_via_integral(&rel, &spec, &[2]).unwrap();
        assert_eq!((c.integral, c.count, c.matches), (rat(9), 9, true));
    }

    #[test]
    fn square_congruence_counts() {
        let rel = RelationSpec::congruence("x^2", &["x"], SymbolTable::new()).unwrap();
        let spec = FieldSpec::mixed(3, 4).unwrap();
        let c = count_via_integral(&rel, &spec, &[3]).unwrap();
        assert_eq!((c.integral, c.count, c.matches), (rat(3), 3, true));
    }

    #[test]
    fn trivial_relation() {
        let rel = RelationSpec::parse(
            "ord(x:VF - y:VF) >= 0 * n:VG",
            None,
            &["x"],
            &["y"],
            vec![crate::formula::Var::vg("n")],
            SymbolTable::new(),
        ).unwrap();
        let spec = FieldSpec::equal(3, 2).unwrap();
        let c = count_via_integral(&rel, &spec, &[0]).unwrap();
        assert_eq!((c.integral, c.count), (rat(1), 1));
    }
}
