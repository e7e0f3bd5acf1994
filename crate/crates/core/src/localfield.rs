//! Exact arithmetic in the truncated valuation rings `Z/p^N` and `F_p[t]/t^N`.
//!
//! Both characteristic cases share one encoding: an element is stored as a
//! `u64` whose base-`p` digits are the coefficients of the uniformizer
//! expansion `a_0 + a_1 w + ... + a_{N-1} w^{N-1}`, with `w = p` in the mixed
//! case and `w = t` in the equal case. In the mixed case this is just the
//! least nonnegative residue modulo `p^N`; in the equal case it is the
//! coefficient vector read as a base-`p` number. Reducing an element to a
//! coarser precision `N'` is then `repr mod p^N'` in both cases.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of elements [`enumerate`] is willing to produce.
pub const ENUMERATION_BUDGET: u64 = 100_000_000;

/// Hard cap on `p^N` so that products fit in `u128` and reprs in `u64`.
const MODULUS_CAP: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("invalid precision {requested} (must satisfy 1 <= N' <= {max})")]
    InvalidPrecision { requested: u32, max: u32 },
    #[error("p^N = {p}^{precision} does not fit the exact-integer representation")]
    PrecisionTooLarge { p: u64, precision: u32 },
    #[error("field specs differ: {left} vs {right}")]
    SpecMismatch { left: FieldSpec, right: FieldSpec },
    #[error("enumeration of {count} elements exceeds the budget of {budget}")]
    EnumerationBudgetExceeded { count: u128, budget: u64 },
    #[error("representative {repr} out of range for {spec}")]
    ReprOutOfRange { repr: u64, spec: FieldSpec },
}

/// Which local field the truncation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Characteristic {
    /// `Z_p`, truncated to `Z/p^N`.
    Mixed,
    /// `F_p[[t]]`, truncated to `F_p[t]/t^N`.
    Equal,
}

impl Characteristic {
    pub fn as_str(self) -> &'static str {
        match self {
            Characteristic::Mixed => "mixed",
            Characteristic::Equal => "equal",
        }
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Characteristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mixed" => Ok(Characteristic::Mixed),
            "equal" => Ok(Characteristic::Equal),
            other => Err(format!("unknown characteristic case `{other}` (expected mixed|equal)")),
        }
    }
}

/// A truncated valuation ring `O_K / m^N` with `K` one of `Q_p`, `F_p((t))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldSpec {
    case: Characteristic,
    p: u64,
    precision: u32,
    modulus: u64,
}

impl FieldSpec {
    pub fn new(case: Characteristic, p: u64, precision: u32) -> Result<Self, FieldError> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        if precision == 0 {
            return Err(FieldError::InvalidPrecision { requested: 0, max: u32::MAX });
        }
        let mut modulus: u64 = 1;
        for _ in 0..precision {
            modulus = match modulus.checked_mul(p) {
                Some(m) if m <= MODULUS_CAP => m,
                _ => return Err(FieldError::PrecisionTooLarge { p, precision }),
            };
        }
        Ok(FieldSpec { case, p, precision, modulus })
    }

    pub fn mixed(p: u64, precision: u32) -> Result<Self, FieldError> {
        Self::new(Characteristic::Mixed, p, precision)
    }

    pub fn equal(p: u64, precision: u32) -> Result<Self, FieldError> {
        Self::new(Characteristic::Equal, p, precision)
    }

    pub fn case(&self) -> Characteristic {
        self.case
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Number of elements, `p^N`.
    pub fn size(&self) -> u64 {
        self.modulus
    }

    /// The same field at a different precision.
    pub fn with_precision(&self, precision: u32) -> Result<Self, FieldError> {
        Self::new(self.case, self.p, precision)
    }

    /// `p^k` as an integer, for `k <= N`.
    pub fn p_pow(&self, k: u32) -> u64 {
        debug_assert!(k <= self.precision);
        self.p.pow(k)
    }

    pub fn zero(&self) -> TruncElem {
        TruncElem { spec: *self, repr: 0 }
    }

    pub fn one(&self) -> TruncElem {
        TruncElem { spec: *self, repr: 1 % self.modulus }
    }

    /// The uniformizer (`p` resp. `t`).
    pub fn uniformizer(&self) -> TruncElem {
        let repr = if self.precision >= 2 { self.p } else { 0 };
        TruncElem { spec: *self, repr }
    }

    /// Image of an integer under `Z -> O_K -> O_K/m^N`.
    pub fn from_int(&self, n: i64) -> TruncElem {
        let repr = match self.case {
            Characteristic::Mixed => (n as i128).rem_euclid(self.modulus as i128) as u64,
            Characteristic::Equal => (n as i128).rem_euclid(self.p as i128) as u64,
        };
        TruncElem { spec: *self, repr }
    }

    /// Element with the given canonical representative.
    pub fn from_repr(&self, repr: u64) -> Result<TruncElem, FieldError> {
        if repr >= self.modulus {
            return Err(FieldError::ReprOutOfRange { repr, spec: *self });
        }
        Ok(TruncElem { spec: *self, repr })
    }

    /// Element `sum digits[i] * w^i`; digits beyond the precision are dropped.
    pub fn from_digits(&self, digits: &[u64]) -> TruncElem {
        let mut repr = 0u64;
        for &d in digits.iter().take(self.precision as usize).rev() {
            repr = repr * self.p + d % self.p;
        }
        TruncElem { spec: *self, repr }
    }

    // Raw operations on canonical representatives. These are the hot path
    // of the formula evaluator and skip the spec bookkeeping of `TruncElem`.

    #[inline]
    pub fn add_raw(&self, a: u64, b: u64) -> u64 {
        match self.case {
            Characteristic::Mixed => {
                let s = a as u128 + b as u128;
                (s % self.modulus as u128) as u64
            }
            Characteristic::Equal => self.digitwise(a, b, |x, y, p| (x + y) % p),
        }
    }

    #[inline]
    pub fn sub_raw(&self, a: u64, b: u64) -> u64 {
        match self.case {
            Characteristic::Mixed => {
                let m = self.modulus;
                if a >= b { a - b } else { m - (b - a) }
            }
            Characteristic::Equal => self.digitwise(a, b, |x, y, p| (x + p - y) % p),
        }
    }

    #[inline]
    pub fn neg_raw(&self, a: u64) -> u64 {
        self.sub_raw(0, a)
    }

    #[inline]
    pub fn mul_raw(&self, a: u64, b: u64) -> u64 {
        match self.case {
            Characteristic::Mixed => ((a as u128 * b as u128) % self.modulus as u128) as u64,
            Characteristic::Equal => {
                let n = self.precision as usize;
                let da = self.digits_of(a);
                let db = self.digits_of(b);
                let mut out = [0u64; 64];
                for i in 0..n {
                    if da[i] == 0 {
                        continue;
                    }
                    for j in 0..(n - i) {
                        out[i + j] = (out[i + j] + da[i] * db[j]) % self.p;
                    }
                }
                self.encode(&out[..n])
            }
        }
    }

    /// Valuation of a raw representative; `None` means zero at this precision.
    #[inline]
    pub fn ord_raw(&self, a: u64) -> Option<u32> {
        if a == 0 {
            return None;
        }
        let mut k = 0;
        let mut x = a;
        while x.is_multiple_of(self.p) {
            x /= self.p;
            k += 1;
        }
        Some(k)
    }

    /// Angular component of a raw representative (0 for zero).
    #[inline]
    pub fn ac_raw(&self, a: u64) -> u64 {
        if a == 0 {
            return 0;
        }
        let mut x = a;
        while x.is_multiple_of(self.p) {
            x /= self.p;
        }
        x % self.p
    }

    /// `a mod m^level`, i.e. the canonical corner of the level-`level` box containing `a`.
    #[inline]
    pub fn truncate_raw(&self, a: u64, level: u32) -> u64 {
        if level >= self.precision {
            a
        } else {
            a % self.p.pow(level)
        }
    }

    /// Digit of `w^i` in a raw representative.
    #[inline]
    pub fn digit_raw(&self, a: u64, i: u32) -> u64 {
        (a / self.p.pow(i)) % self.p
    }

    fn digits_of(&self, a: u64) -> [u64; 64] {
        let mut out = [0u64; 64];
        let mut x = a;
        for d in out.iter_mut().take(self.precision as usize) {
            *d = x % self.p;
            x /= self.p;
        }
        out
    }

    fn encode(&self, digits: &[u64]) -> u64 {
        digits.iter().rev().fold(0u64, |acc, &d| acc * self.p + d)
    }

    #[inline]
    fn digitwise(&self, a: u64, b: u64, op: impl Fn(u64, u64, u64) -> u64) -> u64 {
        let p = self.p;
        let (mut x, mut y) = (a, b);
        let mut out = 0u64;
        let mut place = 1u64;
        for _ in 0..self.precision {
            out += op(x % p, y % p, p) * place;
            x /= p;
            y /= p;
            place = place.wrapping_mul(p);
        }
        out
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.case {
            Characteristic::Mixed => write!(f, "Z/{}^{}", self.p, self.precision),
            Characteristic::Equal => write!(f, "F_{}[t]/t^{}", self.p, self.precision),
        }
    }
}

/// Valuation at finite precision: either an exact value below `N`, or `Top`
/// (the element lies in `m^N` and cannot be told apart from zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValuationValue {
    Finite(u32),
    Top,
}

impl ValuationValue {
    pub fn finite(self) -> Option<u32> {
        match self {
            ValuationValue::Finite(k) => Some(k),
            ValuationValue::Top => None,
        }
    }
}

impl fmt::Display for ValuationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValuationValue::Finite(k) => write!(f, "{k}"),
            ValuationValue::Top => f.write_str("top"),
        }
    }
}

/// An element of `O_K / m^N` in canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TruncElem {
    spec: FieldSpec,
    repr: u64,
}

impl TruncElem {
    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    /// Canonical representative (see module docs for the encoding).
    pub fn repr(&self) -> u64 {
        self.repr
    }

    pub fn is_zero(&self) -> bool {
        self.repr == 0
    }

    /// Coefficients of `1, w, ..., w^{N-1}`.
    pub fn digits(&self) -> Vec<u64> {
        let p = self.spec.p;
        let mut x = self.repr;
        (0..self.spec.precision)
            .map(|_| {
                let d = x % p;
                x /= p;
                d
            })
            .collect()
    }

    fn check(&self, other: &TruncElem) -> Result<(), FieldError> {
        if self.spec != other.spec {
            return Err(FieldError::SpecMismatch { left: self.spec, right: other.spec });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &TruncElem) -> Result<TruncElem, FieldError> {
        self.check(other)?;
        Ok(TruncElem { spec: self.spec, repr: self.spec.add_raw(self.repr, other.repr) })
    }

    pub fn checked_sub(&self, other: &TruncElem) -> Result<TruncElem, FieldError> {
        self.check(other)?;
        Ok(TruncElem { spec: self.spec, repr: self.spec.sub_raw(self.repr, other.repr) })
    }

    pub fn checked_mul(&self, other: &TruncElem) -> Result<TruncElem, FieldError> {
        self.check(other)?;
        Ok(TruncElem { spec: self.spec, repr: self.spec.mul_raw(self.repr, other.repr) })
    }

    pub fn ord(&self) -> ValuationValue {
        match self.spec.ord_raw(self.repr) {
            Some(k) => ValuationValue::Finite(k),
            None => ValuationValue::Top,
        }
    }

    /// Angular component in `F_p`, with `ac(0) = 0`.
    pub fn ac(&self) -> u64 {
        self.spec.ac_raw(self.repr)
    }

    /// Image in the residue field.
    pub fn residue(&self) -> u64 {
        self.repr % self.spec.p
    }

    /// Canonical image under `O/m^N -> O/m^{N'}`.
    pub fn reduce_precision(&self, precision: u32) -> Result<TruncElem, FieldError> {
        if precision == 0 || precision > self.spec.precision {
            return Err(FieldError::InvalidPrecision {
                requested: precision,
                max: self.spec.precision,
            });
        }
        let spec = self.spec.with_precision(precision)?;
        Ok(TruncElem { spec, repr: self.repr % spec.modulus })
    }

    /// The same representative read at a higher precision.
    pub fn lift_precision(&self, precision: u32) -> Result<TruncElem, FieldError> {
        if precision < self.spec.precision {
            return Err(FieldError::InvalidPrecision { requested: precision, max: u32::MAX });
        }
        let spec = self.spec.with_precision(precision)?;
        Ok(TruncElem { spec, repr: self.repr })
    }
}

impl fmt::Display for TruncElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spec.case {
            Characteristic::Mixed => write!(f, "{}", self.repr),
            Characteristic::Equal => {
                let mut first = true;
                for (i, d) in self.digits().into_iter().enumerate() {
                    if d == 0 {
                        continue;
                    }
                    if !first {
                        f.write_str("+")?;
                    }
                    first = false;
                    match (i, d) {
                        (0, d) => write!(f, "{d}")?,
                        (1, 1) => f.write_str("t")?,
                        (1, d) => write!(f, "{d}t")?,
                        (i, 1) => write!(f, "t^{i}")?,
                        (i, d) => write!(f, "{d}t^{i}")?,
                    }
                }
                if first {
                    f.write_str("0")?;
                }
                Ok(())
            }
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait for TruncElem {
            type Output = TruncElem;

            /// Panics if the operands live in different truncations.
            fn $method(self, rhs: TruncElem) -> TruncElem {
                self.$checked(&rhs).expect("TruncElem operands must share a FieldSpec")
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl Neg for TruncElem {
    type Output = TruncElem;

    fn neg(self) -> TruncElem {
        TruncElem { spec: self.spec, repr: self.spec.neg_raw(self.repr) }
    }
}

/// All `p^N` elements in ascending order of representative.
pub fn enumerate(spec: &FieldSpec) -> Result<impl Iterator<Item = TruncElem> + '_, FieldError> {
    check_budget(spec.size() as u128)?;
    Ok((0..spec.size()).map(move |repr| TruncElem { spec: *spec, repr }))
}

pub(crate) fn check_budget(count: u128) -> Result<(), FieldError> {
    if count > ENUMERATION_BUDGET as u128 {
        return Err(FieldError::EnumerationBudgetExceeded { count, budget: ENUMERATION_BUDGET });
    }
    Ok(())
}

/// Deterministic trial-division primality test.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}
