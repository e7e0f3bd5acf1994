//! Integrating then specializing versus specializing then integrating, on a
//! corpus of cell integrands over `O^m`, optionally summed over a VG index.
//!
//! The integrand is
//! `c * prod_i [lo_i <= ord x_i <= hi_i] q^(alpha_i ord x_i) (ord x_i + 1)^[linear_i]
//!  * R(ac x_1, ..., ac x_m) * sum_{n >= lo} q^(beta n)`
//! where `R` counts (or inverts the count of) residue tuples satisfying a formula.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::eval::Compiled;
use crate::formula::{parse, Formula, SymbolTable, Term, Var};
use crate::localfield::FieldSpec;
use crate::multibox::FiniteSubset;
use crate::poly::rational_str;

use super::integrate::{haar_integrate, presburger_sum, qpow, Axis, FnExpr, SpecializedFn, Tail};
use super::scalar::MotivicScalar;
use super::MotivicError;

/// One valuation axis of a cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrdAxis {
    pub alpha: i64,
    pub lo: u32,
    /// `None` for an unbounded range.
    pub hi: Option<u32>,
    pub linear: bool,
}

/// A residue-field factor in the angular components `a1, ..., am`.
#[derive(Debug, Clone)]
pub struct ResidueFactor {
    /// Formula in the RF variables `a1..am` and the fiber variables.
    pub formula: Formula,
    pub fiber_vars: Vec<Var>,
    pub reciprocal: bool,
}

/// `sum_{n >= lo} q^(beta n)` with `beta < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VgSum {
    pub beta: i64,
    pub lo: i64,
}

#[derive(Debug, Clone)]
pub struct CellIntegrand {
    pub name: String,
    pub p: u64,
    pub coeff: MotivicScalar,
    pub axes: Vec<OrdAxis>,
    pub residue: Option<ResidueFactor>,
    pub vg: Option<VgSum>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommutationRow {
    pub name: String,
    pub p: u64,
    /// The integral in the coefficient ring, before specialization.
    pub symbolic: String,
    #[serde(with = "rational_str")]
    pub specialized: BigRational,
    #[serde(with = "rational_str")]
    pub pointwise: BigRational,
    /// Certified bound on `|pointwise - true value|`.
    #[serde(with = "rational_str")]
    pub error: BigRational,
    pub exact: bool,
    /// Haar integral over one truncation, when every range is finite and small.
    pub direct: Option<String>,
    pub agree: bool,
}

fn ac_var(i: usize) -> Var {
    Var::rf(format!("a{}", i + 1))
}

fn coord(i: usize) -> Var {
    Var::vf(format!("x{}", i + 1))
}

fn l_minus_one() -> MotivicScalar {
    &MotivicScalar::l_pow(1) - &MotivicScalar::one()
}

/// `L^-1 sum_k (k+1)^[linear] L^((alpha-1) k)` over the axis range.
fn axis_closed_form(a: &OrdAxis) -> Result<MotivicScalar, MotivicError> {
    let e = a.alpha - 1;
    let lo = a.lo as i64;
    let body = match a.hi {
        Some(hi) => {
            let mut s = MotivicScalar::zero();
            for k in lo..=hi as i64 {
                let c = if a.linear { k + 1 } else { 1 };
                s = &s + &MotivicScalar::monomial(c, e * k);
            }
            s
        }
        None if e >= 0 => return Err(MotivicError::DivergentFamily { ratio: format!("L^{e}") }),
        None => {
            let g = MotivicScalar::geometric((-e) as u32)?;
            if a.linear {
                let top = &MotivicScalar::monomial(lo + 1, e * lo) - &MotivicScalar::monomial(lo, e * (lo + 1));
                &(&top * &g) * &g
            } else {
                &MotivicScalar::l_pow(e * lo) * &g
            }
        }
    };
    Ok(&body * &MotivicScalar::l_pow(-1))
}

/// `sum over (F_p^x)^m` of the fiber count or its reciprocal.
fn residue_total(cell: &CellIntegrand, r: &ResidueFactor) -> Result<BigRational, MotivicError> {
    let p = cell.p;
    let m = cell.axes.len();
    let spec = FieldSpec::mixed(p, 1)?;
    let mut layout: Vec<Var> = (0..m).map(ac_var).collect();
    layout.extend(r.fiber_vars.iter().cloned());
    let c = Compiled::new(&r.formula, &SymbolTable::new(), &spec, &layout, 1)?;
    let mut fr = c.frame();
    let s = r.fiber_vars.len() as u32;
    let mut total = BigRational::zero();
    for a in 0..(p - 1).pow(m as u32) {
        let mut code = a;
        for slot in fr.iter_mut().take(m) {
            *slot = (code % (p - 1) + 1) as i64;
            code /= p - 1;
        }
        let mut count = 0i64;
        for u in 0..p.pow(s) {
            let mut code = u;
            for k in 0..s as usize {
                fr[m + k] = (code % p) as i64;
                code /= p;
            }
            let v = c.eval(&mut fr);
            if !v.stable {
                return Err(MotivicError::Undecided { point: format!("residues {:?}", &fr[..m]) });
            }
            count += v.value as i64;
        }
        total += match (r.reciprocal, count) {
            (true, 0) => return Err(MotivicError::EmptyFiber { point: format!("residues {:?}", &fr[..m]) }),
            (true, c) => BigRational::new(BigInt::one(), BigInt::from(c)),
            (false, c) => BigRational::from_integer(BigInt::from(c)),
        };
    }
    Ok(total)
}

/// Integrates in the coefficient ring, then specializes at `q = p`.
pub fn integrate_symbolic(cell: &CellIntegrand) -> Result<(MotivicScalar, BigRational), MotivicError> {
    let mut s = cell.coeff.clone();
    for a in &cell.axes {
        s = &s * &axis_closed_form(a)?;
    }
    if let Some(vg) = cell.vg {
        if vg.beta >= 0 {
            return Err(MotivicError::DivergentFamily { ratio: format!("L^{}", vg.beta) });
        }
        let g = MotivicScalar::geometric((-vg.beta) as u32)?;
        s = &s * &(&MotivicScalar::l_pow(vg.beta * vg.lo) * &g);
    }
    let value = match &cell.residue {
        None => {
            for _ in &cell.axes {
                s = &s * &l_minus_one();
            }
            s.theta_int(cell.p)
        }
        Some(r) => s.theta_int(cell.p) * residue_total(cell, r)?,
    };
    Ok((s, value))
}

/// The integrand as a function of the points of `O^m`, specialized at `q = p`.
fn pointwise_fn(cell: &CellIntegrand) -> Result<SpecializedFn, MotivicError> {
    let m = cell.axes.len();
    let mut parts = vec![
        FnExpr::Scalar(cell.coeff.clone()),
        FnExpr::QPowOrd { weights: cell.axes.iter().map(|a| a.alpha).collect(), offset: 0, cap: u32::MAX },
    ];
    for (i, a) in cell.axes.iter().enumerate() {
        if a.linear {
            parts.push(FnExpr::OrdFactor { coord: i, shift: 1, cap: u32::MAX });
        }
    }
    if let Some(r) = &cell.residue {
        let mut f = r.formula.clone();
        for i in 0..m {
            f = f
                .substitute(&ac_var(i), &Term::Ac(Box::new(Term::var(coord(i)))))
                .map_err(|e| MotivicError::Invalid(e.to_string()))?;
        }
        let count = FnExpr::FiberCount { formula: f, residue_vars: r.fiber_vars.clone() };
        parts.push(if r.reciprocal { FnExpr::Reciprocal(Box::new(count)) } else { count });
    }
    Ok(SpecializedFn {
        coords: (0..m).map(coord).collect(),
        expr: FnExpr::Product(parts),
        symbols: SymbolTable::new(),
    })
}

/// `{x : ord x_i = k_i}` as level `max k + 1` boxes.
fn shell(p: u64, k: &[u32]) -> Result<FiniteSubset, MotivicError> {
    let level = k.iter().max().copied().unwrap_or(0) + 1;
    let spec = FieldSpec::mixed(p, level)?;
    let mut boxes = vec![Vec::new()];
    for &ki in k {
        let base = spec.p_pow(ki);
        let units: Vec<u64> = (0..spec.p_pow(level - ki)).filter(|u| u % p != 0).collect();
        boxes = boxes
            .into_iter()
            .flat_map(|b: Vec<u64>| {
                units.iter().map(move |&u| {
                    let mut v = b.clone();
                    v.push(u * base);
                    v
                })
            })
            .collect();
    }
    Ok(FiniteSubset::from_boxes(spec, k.len(), level, boxes)?)
}

/// Bound on `t_k / t_(k-1)` for `t_k = (k+1) q^(e k)` and `k >= start >= 1`.
fn linear_ratio(p: u64, e: i64, start: u32) -> BigRational {
    let s = start as i64;
    BigRational::new(BigInt::from(s + 1), BigInt::from(s)) * qpow(p, e)
}

/// Specializes first: Haar integrals over valuation shells, summed over the
/// shell indices (and the VG index) with certified tails.
pub fn integrate_pointwise(cell: &CellIntegrand) -> Result<(BigRational, BigRational), MotivicError> {
    let g = pointwise_fn(cell)?;
    let p = cell.p;
    let mut axes = Vec::new();
    for a in &cell.axes {
        let lo = a.lo as i64;
        axes.push(match a.hi {
            Some(hi) => Axis::finite(lo, hi as i64),
            None if a.alpha >= 1 => {
                return Err(MotivicError::DivergentFamily { ratio: format!("{p}^{}", a.alpha - 1) })
            }
            None if a.linear => {
                let hi = lo + 3;
                Axis::upward(lo, hi, Tail::RatioBound(linear_ratio(p, a.alpha - 1, hi as u32 + 1)))
            }
            None => Axis::upward(lo, lo, Tail::Geometric(qpow(p, a.alpha - 1))),
        });
    }
    if let Some(vg) = cell.vg {
        axes.push(Axis::upward(vg.lo, vg.lo, Tail::Geometric(qpow(p, vg.beta))));
    }
    let m = cell.axes.len();
    let mut memo: HashMap<Vec<u32>, BigRational> = HashMap::new();
    let mut failure = None;
    let sum = presburger_sum(&axes, |idx| {
        if failure.is_some() {
            return BigRational::zero();
        }
        let k: Vec<u32> = idx[..m].iter().map(|&v| v as u32).collect();
        let vg_factor = match cell.vg {
            Some(vg) => qpow(p, vg.beta * idx[m]),
            None => BigRational::one(),
        };
        if let Some(v) = memo.get(&k) {
            return v * vg_factor;
        }
        match shell(p, &k).and_then(|d| haar_integrate(&g, &d)) {
            Ok(v) => {
                memo.insert(k, v.clone());
                v * vg_factor
            }
            Err(e) => {
                failure = Some(e);
                BigRational::zero()
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((sum.value, sum.error))
}

/// Single Haar integral over one truncation, for small all-finite cells.
pub fn integrate_direct(cell: &CellIntegrand) -> Result<Option<BigRational>, MotivicError> {
    if cell.vg.is_some() || cell.axes.iter().any(|a| a.hi.is_none()) {
        return Ok(None);
    }
    let level = cell.axes.iter().filter_map(|a| a.hi).max().unwrap_or(0) + 1;
    let spec = FieldSpec::mixed(cell.p, level)?;
    if (spec.size() as u128).pow(cell.axes.len() as u32) > 100_000 {
        return Ok(None);
    }
    let axes = cell.axes.clone();
    let domain = FiniteSubset::from_predicate(spec, axes.len(), level, |b| {
        b.iter().zip(&axes).all(|(&x, a)| spec.ord_raw(x).is_some_and(|o| o >= a.lo && Some(o) <= a.hi))
    })?;
    Ok(Some(haar_integrate(&pointwise_fn(cell)?, &domain)?))
}

/// Relative tolerance for sums whose tails are only bounded.
fn tolerance() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(1_000_000_000_000u64))
}

pub fn check_commutation(cell: &CellIntegrand) -> Result<CommutationRow, MotivicError> {
    let (symbolic, specialized) = integrate_symbolic(cell)?;
    let (pointwise, error) = integrate_pointwise(cell)?;
    let direct = integrate_direct(cell)?;
    let exact = error.is_zero();
    let mut agree = if exact {
        specialized == pointwise
    } else {
        (&specialized - &pointwise).abs() <= error && error <= tolerance() * specialized.abs()
    };
    if let Some(d) = &direct {
        agree &= *d == specialized;
    }
    Ok(CommutationRow {
        name: cell.name.clone(),
        p: cell.p,
        symbolic: symbolic.to_string(),
        specialized,
        pointwise,
        error,
        exact,
        direct: direct.map(|d| d.to_string()),
        agree,
    })
}

fn axis(alpha: i64, lo: u32, hi: Option<u32>) -> OrdAxis {
    OrdAxis { alpha, lo, hi, linear: false }
}

fn linear(alpha: i64, lo: u32) -> OrdAxis {
    OrdAxis { alpha, lo, hi: None, linear: true }
}

fn residue(formula: &str, fiber: &[&str], reciprocal: bool) -> Option<ResidueFactor> {
    let formula = parse(formula).expect("corpus formula parses");
    Some(ResidueFactor { formula, fiber_vars: fiber.iter().map(|v| Var::rf(*v)).collect(), reciprocal })
}

fn cell(name: &str, p: u64, axes: Vec<OrdAxis>) -> CellIntegrand {
    CellIntegrand { name: name.into(), p, coeff: MotivicScalar::one(), axes, residue: None, vg: None }
}

/// Twenty cells covering finite and infinite ranges, linear factors, residue
/// counts and reciprocals, scalar coefficients and VG sums.
pub fn corpus() -> Vec<CellIntegrand> {
    let sq = "u:RF * u:RF = a1:RF";
    let sq_or_zero = "u:RF * u:RF = a1:RF \\/ u:RF = 0";
    let geometric2 = MotivicScalar::geometric(2).expect("admissible");
    vec![
        cell("volume", 3, vec![axis(0, 0, None)]),
        cell("maximal ideal", 5, vec![axis(0, 1, None)]),
        cell("decaying", 3, vec![axis(-1, 0, None)]),
        cell("growing finite", 7, vec![axis(1, 0, Some(3))]),
        cell("deep start", 2, vec![axis(-2, 2, None)]),
        cell("product", 3, vec![axis(0, 0, None), axis(-1, 1, None)]),
        cell("mixed ranges", 5, vec![axis(1, 0, Some(2)), axis(0, 0, None)]),
        cell("linear", 3, vec![linear(0, 0)]),
        cell("linear decaying", 5, vec![linear(-1, 1)]),
        cell("linear dyadic", 2, vec![linear(-1, 0)]),
        CellIntegrand { residue: residue(sq, &["u"], false), ..cell("square roots", 3, vec![axis(0, 0, None)]) },
        CellIntegrand {
            residue: residue(sq_or_zero, &["u"], true),
            ..cell("reciprocal roots", 5, vec![axis(0, 0, None)])
        },
        CellIntegrand {
            residue: residue("u:RF ^ 3 = a1:RF", &["u"], false),
            ..cell("cube roots", 7, vec![axis(-1, 0, Some(2))])
        },
        CellIntegrand {
            residue: residue("u:RF * u:RF = a1:RF * a2:RF", &["u"], false),
            ..cell("norm roots", 3, vec![axis(0, 0, None), axis(0, 0, None)])
        },
        CellIntegrand {
            residue: residue("u:RF * u:RF = a1:RF \\/ u:RF * u:RF = a2:RF \\/ u:RF = 0", &["u"], true),
            ..cell("reciprocal pair", 5, vec![axis(0, 0, Some(1)), axis(-1, 0, None)])
        },
        CellIntegrand { vg: Some(VgSum { beta: -1, lo: 0 }), ..cell("vg sum", 3, vec![axis(0, 0, None)]) },
        CellIntegrand {
            vg: Some(VgSum { beta: -2, lo: 1 }),
            ..cell("vg shifted", 5, vec![axis(-1, 1, Some(3))])
        },
        CellIntegrand { coeff: geometric2, ..cell("scalar coefficient", 7, vec![axis(0, 0, None)]) },
        CellIntegrand {
            coeff: &MotivicScalar::l_pow(2) - &MotivicScalar::l_pow(1),
            ..cell("scalar with linear", 3, vec![linear(-1, 2)])
        },
        CellIntegrand {
            residue: residue("u:RF = a1:RF * a2:RF", &["u"], false),
            vg: Some(VgSum { beta: -1, lo: -2 }),
            ..cell("dyadic box", 2, vec![axis(-1, 0, Some(2)), axis(-1, 1, Some(2))])
        },
    ]
}
