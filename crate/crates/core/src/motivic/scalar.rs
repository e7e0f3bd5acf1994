//! The ring `Z[L, L^-1, 1/(1 - L^-i)]` with its specializations `L -> q`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::poly::Poly;

use super::MotivicError;

/// `num / prod_i (1 - L^-i)^{e_i}` with `num` a Laurent polynomial in `L`.
///
/// Representations are not unique (`1 - L^-2` shares a factor with
/// `1 + L^-1`); equality compares cross-multiplied numerators.
#[derive(Debug, Clone)]
pub struct MotivicScalar {
    num: BTreeMap<i64, BigInt>,
    den: BTreeMap<u32, u32>,
}

type Laurent = BTreeMap<i64, BigInt>;

fn lmul(a: &Laurent, b: &Laurent) -> Laurent {
    let mut out = Laurent::new();
    for (i, x) in a {
        for (j, y) in b {
            *out.entry(i + j).or_insert_with(BigInt::zero) += x * y;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn ladd(a: &Laurent, b: &Laurent) -> Laurent {
    let mut out = a.clone();
    for (j, y) in b {
        *out.entry(*j).or_insert_with(BigInt::zero) += y;
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// `1 - L^-i`.
fn factor(i: u32) -> Laurent {
    Laurent::from([(0, BigInt::one()), (-(i as i64), -BigInt::one())])
}

fn lpow(a: &Laurent, e: u32) -> Laurent {
    (0..e).fold(Laurent::from([(0, BigInt::one())]), |acc, _| lmul(&acc, a))
}

/// Exact quotient by `1 - L^-i`, if any.
fn ldiv_factor(a: &Laurent, i: u32) -> Option<Laurent> {
    let (&lo, _) = a.iter().next()?;
    let (&hi, _) = a.iter().next_back()?;
    // Write a = L^lo P(L) and divide P by L^i - 1.
    let deg = (hi - lo) as usize;
    let mut p: Vec<BigInt> = vec![BigInt::zero(); deg + 1];
    for (k, c) in a {
        p[(k - lo) as usize] = c.clone();
    }
    let i = i as usize;
    if deg < i {
        return None;
    }
    let mut q = vec![BigInt::zero(); deg - i + 1];
    for top in (i..=deg).rev() {
        let c = std::mem::take(&mut p[top]);
        if !c.is_zero() {
            p[top - i] += &c;
            q[top - i] = c;
        }
    }
    if p.iter().any(|c| !c.is_zero()) {
        return None;
    }
    // a = L^lo (L^i - 1) Q = (1 - L^-i) L^(lo + i) Q.
    let mut out = Laurent::new();
    for (k, c) in q.into_iter().enumerate() {
        if !c.is_zero() {
            out.insert(k as i64 + lo + i as i64, c);
        }
    }
    Some(out)
}

impl MotivicScalar {
    pub fn zero() -> Self {
        MotivicScalar { num: Laurent::new(), den: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::int(1)
    }

    pub fn int(n: i64) -> Self {
        Self::monomial(n, 0)
    }

    /// `c * L^k`.
    pub fn monomial(c: i64, k: i64) -> Self {
        let mut num = Laurent::new();
        if c != 0 {
            num.insert(k, BigInt::from(c));
        }
        MotivicScalar { num, den: BTreeMap::new() }
    }

    /// `L^k`.
    pub fn l_pow(k: i64) -> Self {
        Self::monomial(1, k)
    }

    /// `1 / (1 - L^-i)`, i.e. the sum of `L^{-ik}` over `k >= 0`.
    pub fn geometric(i: u32) -> Result<Self, MotivicError> {
        Self::new(Laurent::from([(0, BigInt::one())]), BTreeMap::from([(i, 1)]))
    }

    /// Laurent numerator with denominator exponents `{i: e_i}`; every `i` must be positive.
    pub fn new(num: BTreeMap<i64, BigInt>, den: BTreeMap<u32, u32>) -> Result<Self, MotivicError> {
        if den.contains_key(&0) {
            return Err(MotivicError::NonAdmissibleDenominator("1 - L^0 vanishes".into()));
        }
        let mut s = MotivicScalar { num, den };
        s.normalize();
        Ok(s)
    }

    pub fn numerator(&self) -> &BTreeMap<i64, BigInt> {
        &self.num
    }

    pub fn denominator(&self) -> &BTreeMap<u32, u32> {
        &self.den
    }

    fn normalize(&mut self) {
        self.num.retain(|_, c| !c.is_zero());
        self.den.retain(|_, e| *e > 0);
        if self.num.is_empty() {
            self.den.clear();
            return;
        }
        let keys: Vec<u32> = self.den.keys().copied().collect();
        for i in keys {
            while self.den[&i] > 0 {
                match ldiv_factor(&self.num, i) {
                    Some(q) => {
                        self.num = q;
                        *self.den.get_mut(&i).unwrap() -= 1;
                    }
                    None => break,
                }
            }
        }
        self.den.retain(|_, e| *e > 0);
        debug_assert!(!self.den.contains_key(&0));
    }

    /// Numerator over the least common denominator with `other`.
    fn lift(&self, den: &BTreeMap<u32, u32>) -> Laurent {
        let mut num = self.num.clone();
        for (&i, &e) in den {
            let have = self.den.get(&i).copied().unwrap_or(0);
            num = lmul(&num, &lpow(&factor(i), e - have));
        }
        num
    }

    fn common_den(a: &Self, b: &Self) -> BTreeMap<u32, u32> {
        let mut den = a.den.clone();
        for (&i, &e) in &b.den {
            let slot = den.entry(i).or_insert(0);
            *slot = (*slot).max(e);
        }
        den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_empty()
    }

    /// `theta_q`: substitutes `L = q`; `q` must exceed 1.
    pub fn theta(&self, q: &BigRational) -> BigRational {
        assert!(q > &BigRational::one(), "specialization needs q > 1");
        let pow = |k: i64| -> BigRational {
            if k >= 0 {
                q.pow(k as i32)
            } else {
                BigRational::one() / q.pow((-k) as i32)
            }
        };
        let mut num = BigRational::zero();
        for (k, c) in &self.num {
            num += BigRational::from_integer(c.clone()) * pow(*k);
        }
        let mut den = BigRational::one();
        for (&i, &e) in &self.den {
            den *= (BigRational::one() - pow(-(i as i64))).pow(e as i32);
        }
        num / den
    }

    pub fn theta_int(&self, q: u64) -> BigRational {
        self.theta(&BigRational::from_integer(BigInt::from(q)))
    }

    /// Whether `theta_q(self) >= 0` for every real `q > 1`.
    pub fn is_nonneg(&self) -> bool {
        // The denominator is positive on (1, inf); L^-lo is too.
        let Some((&lo, _)) = self.num.iter().next() else {
            return true;
        };
        let hi = *self.num.keys().next_back().unwrap();
        let coeffs: Vec<BigRational> = (lo..=hi)
            .map(|k| BigRational::from_integer(self.num.get(&k).cloned().unwrap_or_default()))
            .collect();
        nonneg_on_ray(&Poly::new(coeffs))
    }

    /// `self - other` when the difference is nonnegative.
    pub fn sub_nonneg(&self, other: &Self) -> Option<Self> {
        let d = self - other;
        d.is_nonneg().then_some(d)
    }
}

/// Whether `p(x) >= 0` for every real `x > 1`.
pub fn nonneg_on_ray(p: &Poly) -> bool {
    if p.is_zero() {
        return true;
    }
    let lead_positive = p.leading().is_positive();
    let x_minus_one = Poly::from_ints(&[-1, 1]);
    let mut core = p.clone();
    while let Some(q) = core.exact_div(&x_minus_one) {
        core = q;
    }
    let odd_root = square_free_parts(&core)
        .iter()
        .enumerate()
        .any(|(k, part)| k % 2 == 0 && sturm_roots_above_one(part) > 0);
    lead_positive && !odd_root
}

/// Yun's decomposition: `parts[k]` collects the roots of multiplicity `k + 1`.
pub fn square_free_parts(f: &Poly) -> Vec<Poly> {
    let mut parts = Vec::new();
    if f.degree().unwrap_or(0) == 0 {
        return parts;
    }
    let df = f.derivative();
    let a0 = Poly::gcd(f, &df);
    let mut b = f.exact_div(&a0).unwrap();
    let c = df.exact_div(&a0).unwrap();
    let mut d = &c - &b.derivative();
    while b.degree().unwrap_or(0) > 0 {
        let a = Poly::gcd(&b, &d);
        let nb = b.exact_div(&a).unwrap();
        let nc = d.exact_div(&a).unwrap();
        d = &nc - &nb.derivative();
        b = nb;
        parts.push(a);
    }
    parts
}

/// Distinct real roots in `(1, inf)` of a square-free polynomial with `p(1) != 0`.
pub fn sturm_roots_above_one(p: &Poly) -> usize {
    if p.degree().unwrap_or(0) == 0 {
        return 0;
    }
    let mut seq = vec![p.clone(), p.derivative()];
    loop {
        let n = seq.len();
        let (_, r) = seq[n - 2].div_rem(&seq[n - 1]);
        if r.is_zero() {
            break;
        }
        seq.push(-&r);
    }
    let one = BigRational::one();
    let at_one: Vec<BigRational> = seq.iter().map(|s| s.eval(&one)).collect();
    let at_inf: Vec<BigRational> = seq.iter().map(|s| s.leading()).collect();
    Poly::sign_changes(&at_one) - Poly::sign_changes(&at_inf)
}

impl Add for &MotivicScalar {
    type Output = MotivicScalar;
    fn add(self, o: &MotivicScalar) -> MotivicScalar {
        let den = MotivicScalar::common_den(self, o);
        let num = ladd(&self.lift(&den), &o.lift(&den));
        let mut s = MotivicScalar { num, den };
        s.normalize();
        s
    }
}

impl Neg for &MotivicScalar {
    type Output = MotivicScalar;
    fn neg(self) -> MotivicScalar {
        MotivicScalar { num: self.num.iter().map(|(k, c)| (*k, -c)).collect(), den: self.den.clone() }
    }
}

impl Sub for &MotivicScalar {
    type Output = MotivicScalar;
    fn sub(self, o: &MotivicScalar) -> MotivicScalar {
        self + &(-o)
    }
}

// Denominator exponents add under multiplication.
#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for &MotivicScalar {
    type Output = MotivicScalar;
    fn mul(self, o: &MotivicScalar) -> MotivicScalar {
        let mut den = self.den.clone();
        for (&i, &e) in &o.den {
            *den.entry(i).or_insert(0) += e;
        }
        let mut s = MotivicScalar { num: lmul(&self.num, &o.num), den };
        s.normalize();
        s
    }
}

impl PartialEq for MotivicScalar {
    fn eq(&self, other: &Self) -> bool {
        (self - other).is_zero()
    }
}

impl Eq for MotivicScalar {}

fn write_laurent(f: &mut fmt::Formatter<'_>, num: &Laurent) -> fmt::Result {
    if num.is_empty() {
        return write!(f, "0");
    }
    for (n, (k, c)) in num.iter().rev().enumerate() {
        let neg = c.is_negative();
        let abs = c.abs();
        match (n, neg) {
            (0, true) => write!(f, "-")?,
            (0, false) => {}
            (_, true) => write!(f, " - ")?,
            (_, false) => write!(f, " + ")?,
        }
        match *k {
            0 => write!(f, "{abs}")?,
            k => {
                if !abs.is_one() {
                    write!(f, "{abs}")?;
                }
                if k == 1 {
                    write!(f, "L")?;
                } else {
                    write!(f, "L^{k}")?;
                }
            }
        }
    }
    Ok(())
}

impl fmt::Display for MotivicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_empty() {
            return write_laurent(f, &self.num);
        }
        write!(f, "(")?;
        write_laurent(f, &self.num)?;
        write!(f, ")/(")?;
        for (n, (i, e)) in self.den.iter().enumerate() {
            if n > 0 {
                write!(f, " ")?;
            }
            write!(f, "(1 - L^-{i})")?;
            if *e > 1 {
                write!(f, "^{e}")?;
            }
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    #[test]
    fn ring_laws() {
        let l = MotivicScalar::l_pow(1);
        assert_eq!(&l + &l, MotivicScalar::monomial(2, 1));
        let f = &MotivicScalar::one() - &MotivicScalar::l_pow(-1);
        let g = MotivicScalar::geometric(1).unwrap();
        let prod = &f * &g;
        assert_eq!(prod, MotivicScalar::one());
        assert!(prod.denominator().is_empty());
    }

    #[test]
    fn specializations() {
        assert_eq!(MotivicScalar::geometric(1).unwrap().theta_int(2), rat(2));
        assert_eq!(MotivicScalar::l_pow(2).theta_int(3), rat(9));
        assert_eq!(
            MotivicScalar::geometric(2).unwrap().theta_int(5),
            BigRational::new(25.into(), 24.into())
        );
    }

    #[test]
    fn nonnegativity() {
        let l = MotivicScalar::l_pow(1);
        let one = MotivicScalar::one();
        assert!((&l - &one).is_nonneg());
        assert!(!(&one - &l).is_nonneg());
        // (L - 1)(L - 2) is negative on (1, 2).
        let q = &(&l - &one) * &(&l - &MotivicScalar::int(2));
        assert!(!q.is_nonneg());
        // (L - 2)^2 touches zero but never goes below.
        let sq = &(&l - &MotivicScalar::int(2)) * &(&l - &MotivicScalar::int(2));
        assert!(sq.is_nonneg());
        assert!(sq.sub_nonneg(&MotivicScalar::int(1)).is_none());
    }

    #[test]
    fn display() {
        let g = &MotivicScalar::l_pow(-1) * &MotivicScalar::geometric(2).unwrap();
        assert_eq!(g.to_string(), "(L^-1)/((1 - L^-2))");
    }
}
