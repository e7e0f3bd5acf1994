//! Haar integrals of step functions on `O^n` and sums of families over `Z^r`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::eval::Compiled;
use crate::formula::{Formula, Sort, SymbolTable, Var};
use crate::localfield::{check_budget, FieldSpec};
use crate::multibox::FiniteSubset;

use super::scalar::MotivicScalar;
use super::MotivicError;

/// `q^k` for any integer `k`.
pub(crate) fn qpow(q: u64, k: i64) -> BigRational {
    let b = BigInt::from(q).pow(k.unsigned_abs() as u32);
    if k >= 0 {
        BigRational::from_integer(b)
    } else {
        BigRational::new(BigInt::one(), b)
    }
}

/// A function of the valued-field coordinates, already specialized at `q = p`.
#[derive(Debug, Clone)]
pub enum FnExpr {
    Const(BigRational),
    /// `theta_p` of a motivic scalar.
    Scalar(MotivicScalar),
    /// `q^(offset + sum_i w_i * min(ord x_i, cap))`.
    QPowOrd { weights: Vec<i64>, offset: i64, cap: u32 },
    /// `min(ord x_coord, cap) + shift`.
    OrdFactor { coord: usize, shift: i64, cap: u32 },
    /// 1 where the formula holds, 0 elsewhere.
    Indicator(Formula),
    /// Number of residue tuples satisfying the formula over the point.
    FiberCount { formula: Formula, residue_vars: Vec<Var> },
    Reciprocal(Box<FnExpr>),
    Product(Vec<FnExpr>),
    Sum(Vec<FnExpr>),
}

/// An integrand on `O^n` with named coordinates.
#[derive(Debug, Clone)]
pub struct SpecializedFn {
    pub coords: Vec<Var>,
    pub expr: FnExpr,
    pub symbols: SymbolTable,
}

enum Prepared {
    Const(BigRational),
    QPowOrd { weights: Vec<i64>, offset: i64, cap: u32 },
    OrdFactor { coord: usize, shift: i64, cap: u32 },
    Indicator(Compiled),
    FiberCount { compiled: Compiled, residues: usize },
    Reciprocal(Box<Prepared>),
    Product(Vec<Prepared>),
    Sum(Vec<Prepared>),
}

fn show_point(spec: &FieldSpec, x: &[u64]) -> String {
    let parts: Vec<String> = x
        .iter()
        .map(|&r| spec.from_repr(r).map(|e| e.to_string()).unwrap_or_else(|_| r.to_string()))
        .collect();
    format!("({})", parts.join(", "))
}

impl SpecializedFn {
    pub fn new(coords: &[&str], expr: FnExpr) -> Self {
        SpecializedFn { coords: coords.iter().map(|c| Var::vf(*c)).collect(), expr, symbols: SymbolTable::new() }
    }

    fn prepare(&self, spec: &FieldSpec) -> Result<Prepared, MotivicError> {
        self.prepare_expr(&self.expr, spec)
    }

    fn prepare_expr(&self, e: &FnExpr, spec: &FieldSpec) -> Result<Prepared, MotivicError> {
        let n = self.coords.len();
        Ok(match e {
            FnExpr::Const(c) => Prepared::Const(c.clone()),
            FnExpr::Scalar(s) => Prepared::Const(s.theta_int(spec.p())),
            FnExpr::QPowOrd { weights, offset, cap } => {
                if weights.len() != n {
                    return Err(MotivicError::Invalid(format!("{} weights for {n} coordinates", weights.len())));
                }
                Prepared::QPowOrd { weights: weights.clone(), offset: *offset, cap: *cap }
            }
            FnExpr::OrdFactor { coord, shift, cap } => {
                if *coord >= n {
                    return Err(MotivicError::Invalid(format!("coordinate {coord} out of range")));
                }
                Prepared::OrdFactor { coord: *coord, shift: *shift, cap: *cap }
            }
            FnExpr::Indicator(f) => {
                Prepared::Indicator(Compiled::new(f, &self.symbols, spec, &self.coords, 1)?)
            }
            FnExpr::FiberCount { formula, residue_vars } => {
                if residue_vars.iter().any(|v| v.sort != Sort::RF) {
                    return Err(MotivicError::Invalid("fiber variables must be residue-field variables".into()));
                }
                check_budget((spec.p() as u128).pow(residue_vars.len() as u32))?;
                let mut layout = self.coords.clone();
                layout.extend(residue_vars.iter().cloned());
                Prepared::FiberCount {
                    compiled: Compiled::new(formula, &self.symbols, spec, &layout, 1)?,
                    residues: residue_vars.len(),
                }
            }
            FnExpr::Reciprocal(inner) => Prepared::Reciprocal(Box::new(self.prepare_expr(inner, spec)?)),
            FnExpr::Product(parts) => {
                Prepared::Product(parts.iter().map(|p| self.prepare_expr(p, spec)).collect::<Result<_, _>>()?)
            }
            FnExpr::Sum(parts) => {
                Prepared::Sum(parts.iter().map(|p| self.prepare_expr(p, spec)).collect::<Result<_, _>>()?)
            }
        })
    }
}

impl Prepared {
    fn eval(&self, spec: &FieldSpec, x: &[u64]) -> Result<BigRational, MotivicError> {
        let ord_cap = |xi: u64, cap: u32| -> u32 { spec.ord_raw(xi).unwrap_or(spec.precision()).min(cap) };
        Ok(match self {
            Prepared::Const(c) => c.clone(),
            Prepared::QPowOrd { weights, offset, cap } => {
                let e = weights.iter().zip(x).fold(*offset, |acc, (w, &xi)| acc + w * ord_cap(xi, *cap) as i64);
                qpow(spec.p(), e)
            }
            Prepared::OrdFactor { coord, shift, cap } => {
                BigRational::from_integer(BigInt::from(ord_cap(x[*coord], *cap) as i64 + shift))
            }
            Prepared::Indicator(c) => {
                let mut fr = c.frame();
                for (slot, &xi) in fr.iter_mut().zip(x) {
                    *slot = xi as i64;
                }
                let v = c.eval(&mut fr);
                if !v.stable {
                    return Err(MotivicError::Undecided { point: show_point(spec, x) });
                }
                if v.value {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }
            Prepared::FiberCount { compiled, residues } => {
                let mut fr = compiled.frame();
                for (slot, &xi) in fr.iter_mut().zip(x) {
                    *slot = xi as i64;
                }
                let p = spec.p();
                let n = x.len();
                let mut count = 0u64;
                for code in 0..p.pow(*residues as u32) {
                    let mut c = code;
                    for k in 0..*residues {
                        fr[n + k] = (c % p) as i64;
                        c /= p;
                    }
                    let v = compiled.eval(&mut fr);
                    if !v.stable {
                        return Err(MotivicError::Undecided { point: show_point(spec, x) });
                    }
                    count += v.value as u64;
                }
                BigRational::from_integer(BigInt::from(count))
            }
            Prepared::Reciprocal(inner) => {
                let v = inner.eval(spec, x)?;
                if v.is_zero() {
                    return Err(MotivicError::EmptyFiber { point: show_point(spec, x) });
                }
                BigRational::one() / v
            }
            Prepared::Product(parts) => {
                let mut acc = BigRational::one();
                for part in parts {
                    acc *= part.eval(spec, x)?;
                    if acc.is_zero() {
                        break;
                    }
                }
                acc
            }
            Prepared::Sum(parts) => {
                let mut acc = BigRational::zero();
                for part in parts {
                    acc += part.eval(spec, x)?;
                }
                acc
            }
        })
    }
}

/// `q^(-L n) * sum g(b)` over the level-`L` boxes `b` of the domain.
///
/// `g` receives the precision it is evaluated at and a representative. Each
/// box is also probed at precision `N + 1` on its `2^n` extreme lifts (digits
/// `p - 1` from position `L` up); any disagreement is `NotStepConstant`.
pub fn haar_integrate_with(
    domain: &FiniteSubset,
    mut g: impl FnMut(&FieldSpec, &[u64]) -> Result<BigRational, MotivicError>,
) -> Result<BigRational, MotivicError> {
    let spec = *domain.spec();
    let finer = spec.with_precision(spec.precision() + 1)?;
    let n = domain.arity();
    let level = domain.level();
    let lift = finer.size() - spec.p_pow(level);
    let mut total = BigRational::zero();
    let mut corner = vec![0u64; n];
    for b in domain.boxes() {
        let v = g(&spec, b)?;
        if v.is_negative() {
            return Err(MotivicError::NegativeValue { point: show_point(&spec, b) });
        }
        for mask in 0u32..(1 << n) {
            for (i, c) in corner.iter_mut().enumerate() {
                *c = if mask >> i & 1 == 1 { b[i] + lift } else { b[i] };
            }
            if g(&finer, &corner)? != v {
                return Err(MotivicError::NotStepConstant { point: show_point(&spec, b) });
            }
        }
        total += v;
    }
    Ok(total * qpow(spec.p(), -((level as i64) * n as i64)))
}

/// The Haar integral of `g` over the domain, `O` having mass 1.
pub fn haar_integrate(g: &SpecializedFn, domain: &FiniteSubset) -> Result<BigRational, MotivicError> {
    if g.coords.len() != domain.arity() {
        return Err(MotivicError::Invalid(format!(
            "integrand has {} coordinates, domain has {}",
            g.coords.len(),
            domain.arity()
        )));
    }
    let here = g.prepare(domain.spec())?;
    let finer_spec = domain.spec().with_precision(domain.spec().precision() + 1)?;
    let finer = g.prepare(&finer_spec)?;
    haar_integrate_with(domain, |spec, x| {
        if spec.precision() == domain.spec().precision() {
            here.eval(spec, x)
        } else {
            finer.eval(spec, x)
        }
    })
}

/// Behaviour of a family beyond the explicit range of one axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tail {
    /// The family vanishes there.
    Finite,
    /// Each step away from the range multiplies the (inner) sum by `rho`.
    Geometric(BigRational),
    /// Each step away multiplies the absolute value by at most `rho`.
    RatioBound(BigRational),
}

/// One summation axis: indices `lo..=hi` summed explicitly, tails beyond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub lo: i64,
    pub hi: i64,
    pub below: Tail,
    pub above: Tail,
}

impl Axis {
    pub fn finite(lo: i64, hi: i64) -> Self {
        Axis { lo, hi, below: Tail::Finite, above: Tail::Finite }
    }

    /// `lo..` with the given upper tail starting after `hi`.
    pub fn upward(lo: i64, hi: i64, above: Tail) -> Self {
        Axis { lo, hi, below: Tail::Finite, above }
    }
}

/// `|sum - value| <= error`; `exact` when `error` is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresburgerSum {
    pub value: BigRational,
    pub error: BigRational,
    pub exact: bool,
}

impl fmt::Display for PresburgerSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exact {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{} +- {}", self.value, self.error)
        }
    }
}

/// Stop a ratio-bounded tail once its bound is below this fraction of the sum.
const TAIL_RELATIVE: (i64, i64) = (1, 100_000_000_000_000);
const MAX_TAIL_TERMS: usize = 100_000;

/// Sums `f` over `Z^r` with exact finite parts and certified tails.
///
/// Geometric tails are added in closed form after checking the declared
/// ratio on two steps; ratio-bounded tails are summed until the remaining
/// bound drops below `1e-14` of the partial sum and that bound is reported.
pub fn presburger_sum(
    axes: &[Axis],
    mut f: impl FnMut(&[i64]) -> BigRational,
) -> Result<PresburgerSum, MotivicError> {
    for a in axes {
        if a.lo > a.hi {
            return Err(MotivicError::Invalid(format!("empty axis range {}..={}", a.lo, a.hi)));
        }
        for t in [&a.below, &a.above] {
            match t {
                Tail::Finite => {}
                Tail::Geometric(r) if r.abs() < BigRational::one() => {}
                Tail::RatioBound(r) if !r.is_negative() && *r < BigRational::one() => {}
                Tail::Geometric(r) | Tail::RatioBound(r) => {
                    return Err(MotivicError::DivergentFamily { ratio: r.to_string() })
                }
            }
        }
    }
    let mut idx = vec![0i64; axes.len()];
    let (value, error) = sum_axis(axes, 0, &mut idx, &mut f)?;
    let exact = error.is_zero();
    Ok(PresburgerSum { value, error, exact })
}

type Partial = (BigRational, BigRational);

fn sum_axis(
    axes: &[Axis],
    d: usize,
    idx: &mut Vec<i64>,
    f: &mut impl FnMut(&[i64]) -> BigRational,
) -> Result<Partial, MotivicError> {
    if d == axes.len() {
        return Ok((f(idx), BigRational::zero()));
    }
    let axis = &axes[d];
    let mut inner = |k: i64, idx: &mut Vec<i64>| -> Result<Partial, MotivicError> {
        idx[d] = k;
        sum_axis(axes, d + 1, idx, f)
    };
    let mut value = BigRational::zero();
    let mut error = BigRational::zero();
    let mut edge_hi = None;
    let mut edge_lo = None;
    for k in axis.lo..=axis.hi {
        let t = inner(k, idx)?;
        if k == axis.hi {
            edge_hi = Some(t.clone());
        }
        if k == axis.lo {
            edge_lo = Some(t.clone());
        }
        value += t.0;
        error += t.1;
    }
    for (tail, edge, start, step) in [
        (&axis.above, edge_hi.unwrap(), axis.hi, 1i64),
        (&axis.below, edge_lo.unwrap(), axis.lo, -1i64),
    ] {
        let (v, e) = sum_tail(tail, edge, start, step, &value, |k, idx| inner(k, idx), idx)?;
        value += v;
        error += e;
    }
    Ok((value, error))
}

fn sum_tail(
    tail: &Tail,
    edge: Partial,
    start: i64,
    step: i64,
    partial: &BigRational,
    mut inner: impl FnMut(i64, &mut Vec<i64>) -> Result<Partial, MotivicError>,
    idx: &mut Vec<i64>,
) -> Result<Partial, MotivicError> {
    let one = BigRational::one();
    match tail {
        Tail::Finite => Ok((BigRational::zero(), BigRational::zero())),
        Tail::Geometric(rho) => {
            let mut prev = edge.clone();
            for j in 1..=2 {
                let k = start + step * j;
                let next = inner(k, idx)?;
                let slack = &next.1 + rho.abs() * &prev.1;
                if (&next.0 - rho * &prev.0).abs() > slack {
                    return Err(MotivicError::TailViolation { index: show_index(idx, k) });
                }
                prev = next;
            }
            let factor = rho / (&one - rho);
            let err_factor = rho.abs() / (&one - rho.abs());
            Ok((edge.0 * factor, edge.1 * err_factor))
        }
        Tail::RatioBound(rho) => {
            let tol = BigRational::new(BigInt::from(TAIL_RELATIVE.0), BigInt::from(TAIL_RELATIVE.1));
            let tail_factor = rho / (&one - rho);
            let mut value = BigRational::zero();
            let mut error = BigRational::zero();
            let mut prev = edge.0;
            for j in 1..=MAX_TAIL_TERMS as i64 {
                let k = start + step * j;
                let (t, e) = inner(k, idx)?;
                if t.abs() > rho * prev.abs() {
                    return Err(MotivicError::TailViolation { index: show_index(idx, k) });
                }
                value += &t;
                error += e;
                let bound = t.abs() * &tail_factor;
                if bound <= &tol * (partial + &value).abs() {
                    return Ok((value, error + bound));
                }
                prev = t;
            }
            Err(MotivicError::TailViolation { index: format!("no convergence within {MAX_TAIL_TERMS} terms") })
        }
    }
}

fn show_index(idx: &[i64], k: i64) -> String {
    format!("{idx:?} at {k}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::poly::rat;

    fn frac(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn whole(spec: FieldSpec, arity: usize) -> FiniteSubset {
        FiniteSubset::from_predicate(spec, arity, 0, |_| true).unwrap()
    }

    #[test]
    fn normalization_and_indicator() {
        let spec = FieldSpec::mixed(3, 2).unwrap();
        let one = SpecializedFn::new(&["x"], FnExpr::Const(rat(1)));
        assert_eq!(haar_integrate(&one, &whole(spec, 1)).unwrap(), rat(1));
        let m = SpecializedFn::new(&["x"], FnExpr::Indicator(parse("ord(x:VF) >= 1").unwrap()));
        let dom = FiniteSubset::from_predicate(spec, 1, 1, |_| true).unwrap();
        assert_eq!(haar_integrate(&m, &dom).unwrap(), frac(1, 3));
        // The indicator is not constant on level-0 boxes.
        assert!(matches!(haar_integrate(&m, &whole(spec, 1)), Err(MotivicError::NotStepConstant { .. })));
    }

    #[test]
    fn capped_valuation_power() {
        // Independent oracle: sum over the nine residues mod 9.
        let spec = FieldSpec::mixed(3, 2).unwrap();
        let mut oracle = BigRational::zero();
        for x in 0..9u64 {
            let o = if x == 0 { 2 } else if x % 3 == 0 { 1 } else { 0 };
            oracle += qpow(3, o) * frac(1, 9);
        }
        let g = SpecializedFn::new(&["x"], FnExpr::QPowOrd { weights: vec![1], offset: 0, cap: 2 });
        let dom = FiniteSubset::from_predicate(spec, 1, 2, |_| true).unwrap();
        assert_eq!(haar_integrate(&g, &dom).unwrap(), oracle);
        assert_eq!(oracle, frac(7, 3));
    }

    #[test]
    fn fiber_counts_and_reciprocals() {
        // Number of square roots of ac(x) in F_p, on units.
        let spec = FieldSpec::equal(5, 2).unwrap();
        let formula = parse("ord(x:VF) = 0 /\\ ac(x:VF) = u:RF * u:RF").unwrap();
        let count = FnExpr::FiberCount { formula, residue_vars: vec![Var::rf("u")] };
        let squares = FiniteSubset::from_predicate(spec, 1, 1, |b| b[0] == 1 || b[0] == 4).unwrap();
        let g = SpecializedFn::new(&["x"], count.clone());
        assert_eq!(haar_integrate(&g, &squares).unwrap(), frac(4, 5));
        let inv = SpecializedFn::new(&["x"], FnExpr::Reciprocal(Box::new(count)));
        assert_eq!(haar_integrate(&inv, &squares).unwrap(), frac(1, 5));
        let units = FiniteSubset::from_predicate(spec, 1, 1, |b| b[0] != 0).unwrap();
        assert!(matches!(haar_integrate(&inv, &units), Err(MotivicError::EmptyFiber { .. })));
    }

    #[test]
    fn geometric_sums() {
        let q = 3i64;
        let s = presburger_sum(&[Axis::upward(0, 0, Tail::Geometric(frac(1, q)))], |i| qpow(3, -i[0])).unwrap();
        assert!(s.exact);
        assert_eq!(s.value, frac(3, 2));
        let two_sided = Axis { lo: 0, hi: 0, below: Tail::Geometric(frac(1, 3)), above: Tail::Geometric(frac(1, 3)) };
        let s = presburger_sum(&[two_sided], |i| qpow(3, -i[0].abs())).unwrap();
        assert_eq!(s.value, rat(2));
        let bad = presburger_sum(&[Axis::upward(0, 0, Tail::Geometric(rat(1)))], |_| rat(1));
        assert!(matches!(bad, Err(MotivicError::DivergentFamily { .. })));
        let wrong = presburger_sum(&[Axis::upward(0, 0, Tail::Geometric(frac(1, 2)))], |i| qpow(3, -i[0]));
        assert!(matches!(wrong, Err(MotivicError::TailViolation { .. })));
    }

    #[test]
    fn ratio_bounded_sum() {
        // sum (i+1) 2^-i = 1 / (1 - 1/2)^2 = 4; the ratio is at most 5/8 past i = 3.
        let axis = Axis::upward(0, 3, Tail::RatioBound(frac(5, 8)));
        let s = presburger_sum(&[axis], |i| rat(i[0] + 1) * qpow(2, -i[0])).unwrap();
        assert!(!s.exact);
        assert!((&s.value - rat(4)).abs() <= s.error);
        assert!(s.error <= frac(4, 1_000_000_000_000));
    }

    #[test]
    fn nested_axes() {
        // sum over i, j >= 0 of 2^-i 3^-j = 2 * 3/2.
        let axes = [
            Axis::upward(0, 0, Tail::Geometric(frac(1, 2))),
            Axis::upward(0, 0, Tail::Geometric(frac(1, 3))),
        ];
        let s = presburger_sum(&axes, |i| qpow(2, -i[0]) * qpow(3, -i[1])).unwrap();
        assert_eq!(s.value, rat(3));
    }
}
