//! Generating functions of class counts: exact reconstruction, the shape of
//! the denominator, and fits of the coefficients as polynomials in `q`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{Compiled, EvalError};
use crate::formula::{Formula, Sort, SymbolTable};
use crate::localfield::{check_budget, FieldError, FieldSpec};
use crate::poly::{rat, Poly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("need at least 3 terms, got {got}")]
    TooFewTerms { got: usize },
    #[error("reconstruction is not confirmed; supply {needed_extra} more term(s)")]
    ReconstructionAmbiguous { needed_extra: usize },
    #[error("denominator does not factor into (1 - q^a T^b) terms; left with {residual}")]
    ShapeNotFound { factors: Vec<ShapeFactor>, residual: Poly },
    #[error("coefficient {n} is not uniform in q: mismatch at p = {prime}")]
    UniformityRejected { n: usize, prime: u64 },
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `numerator / denominator` in lowest terms with `denominator(0) = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalFn {
    numerator: Poly,
    denominator: Poly,
}

impl RationalFn {
    pub fn new(numerator: Poly, denominator: Poly) -> Result<Self, SeriesError> {
        let d0 = denominator.coeff(0);
        if d0.is_zero() {
            return Err(SeriesError::InvalidInput("denominator must have a nonzero constant term".into()));
        }
        let g = Poly::gcd(&numerator, &denominator);
        let (mut num, mut den) = if g.degree().unwrap_or(0) > 0 {
            (numerator.exact_div(&g).unwrap(), denominator.exact_div(&g).unwrap())
        } else {
            (numerator, denominator)
        };
        let c = BigRational::one() / den.coeff(0);
        num = num.scale(&c);
        den = den.scale(&c);
        Ok(RationalFn { numerator: num, denominator: den })
    }

    pub fn numerator(&self) -> &Poly {
        &self.numerator
    }

    pub fn denominator(&self) -> &Poly {
        &self.denominator
    }

    /// The first `n` Taylor coefficients.
    pub fn expand(&self, n: usize) -> Vec<BigRational> {
        self.numerator.series_div(&self.denominator, n)
    }
}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |p: &Poly| {
            let s = p.to_string();
            if p.coeffs().iter().filter(|c| !c.is_zero()).count() > 1 { format!("({s})") } else { s }
        };
        if self.denominator == Poly::one() {
            return write!(f, "{}", self.numerator);
        }
        write!(f, "{}/{}", wrap(&self.numerator), wrap(&self.denominator))
    }
}

pub fn to_rationals(counts: &[u64]) -> Vec<BigRational> {
    counts.iter().map(|&c| BigRational::from_integer(BigInt::from(c))).collect()
}

/// Berlekamp–Massey over `Q`: the connection polynomial and linear complexity.
fn berlekamp_massey(s: &[BigRational]) -> (Poly, usize) {
    let mut c = Poly::one();
    let mut b = Poly::one();
    let mut l = 0usize;
    let mut m = 1usize;
    let mut bd = BigRational::one();
    for n in 0..s.len() {
        let mut d = s[n].clone();
        for i in 1..=l {
            d += c.coeff(i) * &s[n - i];
        }
        if d.is_zero() {
            m += 1;
            continue;
        }
        let shift = Poly::monomial(&d / &bd, m);
        let next = &c - &(&shift * &b);
        if 2 * l <= n {
            b = c;
            l = n + 1 - l;
            bd = d;
            m = 1;
        } else {
            m += 1;
        }
        c = next;
    }
    (c, l)
}

/// Terms required before a recurrence of complexity `l` counts as confirmed.
pub fn confirmation_terms(l: usize) -> usize {
    2 * l + 3
}

/// Reconstructs the rational generating function of `seq`.
///
/// The answer is accepted only with `2L + 3` terms, `L` the linear complexity,
/// so at least three terms beyond those that determine it agree.
pub fn min_recurrence(seq: &[BigRational]) -> Result<RationalFn, SeriesError> {
    if seq.len() < 3 {
        return Err(SeriesError::TooFewTerms { got: seq.len() });
    }
    let (c, l) = berlekamp_massey(seq);
    let needed = confirmation_terms(l);
    if seq.len() < needed {
        return Err(SeriesError::ReconstructionAmbiguous { needed_extra: needed - seq.len() });
    }
    let s = Poly::new(seq.to_vec());
    let full = &c * &s;
    let num = Poly::new((0..l).map(|k| full.coeff(k)).collect());
    let f = RationalFn::new(num, c)?;
    assert_eq!(f.expand(seq.len()), seq, "reconstruction must reproduce its input");
    Ok(f)
}

/// One factor `1 - q^a T^b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeFactor {
    pub a: i64,
    pub b: u32,
}

impl ShapeFactor {
    pub fn poly(&self, q: u64) -> Poly {
        let qa = if self.a >= 0 {
            rat(q as i64).pow(self.a as i32)
        } else {
            BigRational::one() / rat(q as i64).pow((-self.a) as i32)
        };
        &Poly::one() - &Poly::monomial(qa, self.b as usize)
    }
}

impl fmt::Display for ShapeFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let qa = match self.a {
            0 => String::new(),
            1 => "q".into(),
            a => format!("q^{a}"),
        };
        let tb = if self.b == 1 { "T".into() } else { format!("T^{}", self.b) };
        write!(f, "(1 - {qa}{tb})")
    }
}

/// `denominator = product of factors`; `residual_scalar` is the least positive
/// integer clearing every coefficient denominator of the function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenominatorShape {
    pub q: u64,
    pub factors: Vec<ShapeFactor>,
    #[serde(with = "crate::poly::bigint_str")]
    pub residual_scalar: BigInt,
}

impl DenominatorShape {
    pub fn product(&self) -> Poly {
        self.factors.iter().fold(Poly::one(), |acc, f| &acc * &f.poly(self.q))
    }
}

impl fmt::Display for DenominatorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.residual_scalar.is_one() {
            write!(f, "{}", self.residual_scalar)?;
        }
        for x in &self.factors {
            write!(f, "{x}")?;
        }
        if self.factors.is_empty() && self.residual_scalar.is_one() {
            write!(f, "1")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeSearch {
    pub a_max: i64,
    pub b_max: u32,
}

impl Default for ShapeSearch {
    fn default() -> Self {
        ShapeSearch { a_max: 12, b_max: 8 }
    }
}

pub fn denominator_shape(f: &RationalFn, q: u64) -> Result<DenominatorShape, SeriesError> {
    denominator_shape_with(f, q, ShapeSearch::default())
}

/// Greedy exact division by `1 - q^a T^b`, trying smaller `b` first, then
/// smaller `|a|`, then positive `a`.
pub fn denominator_shape_with(f: &RationalFn, q: u64, search: ShapeSearch) -> Result<DenominatorShape, SeriesError> {
    if q < 2 {
        return Err(SeriesError::InvalidInput(format!("q must be at least 2, got {q}")));
    }
    let candidates: Vec<ShapeFactor> = (1..=search.b_max)
        .flat_map(|b| {
            (0..=search.a_max).flat_map(move |abs| {
                let signs: &[i64] = if abs == 0 { &[1] } else { &[1, -1] };
                signs.iter().map(move |s| ShapeFactor { a: s * abs, b })
            })
        })
        .collect();
    let mut rest = f.denominator().clone();
    let mut factors = Vec::new();
    'outer: while rest.degree().unwrap_or(0) > 0 {
        let deg = rest.degree().unwrap();
        for c in &candidates {
            if c.b as usize > deg {
                break;
            }
            if let Some(quot) = rest.exact_div(&c.poly(q)) {
                factors.push(*c);
                rest = quot;
                continue 'outer;
            }
        }
        return Err(SeriesError::ShapeNotFound { factors, residual: rest });
    }
    use num_integer::Integer;
    let residual_scalar = f.numerator().denominator_lcm().lcm(&f.denominator().denominator_lcm());
    let shape = DenominatorShape { q, factors, residual_scalar };
    assert_eq!(&shape.product(), f.denominator(), "shape must multiply back to the denominator");
    Ok(shape)
}

/// Per-coefficient polynomials in `q`, fitted on all primes but the largest
/// and checked exactly on that one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformityFit {
    pub polynomials: Vec<Poly>,
    pub training: Vec<u64>,
    pub held_out: u64,
    /// The fitted polynomials times this are integral.
    #[serde(with = "crate::poly::bigint_str")]
    pub denominator: BigInt,
}

/// Lagrange interpolation through `(x_i, y_i)`.
pub fn lagrange(points: &[(BigRational, BigRational)]) -> Poly {
    let mut out = Poly::zero();
    for (i, (xi, yi)) in points.iter().enumerate() {
        let mut basis = Poly::constant(yi.clone());
        for (j, (xj, _)) in points.iter().enumerate() {
            if i != j {
                let lin = Poly::new(vec![-xj.clone(), BigRational::one()]);
                basis = (&basis * &lin).scale(&(BigRational::one() / (xi - xj)));
            }
        }
        out = &out + &basis;
    }
    out
}

pub fn uniformity_fit(table: &[(u64, Vec<BigRational>)], degree_cap: usize) -> Result<UniformityFit, SeriesError> {
    uniformity_fit_with(table, degree_cap, &BigInt::one())
}

pub fn uniformity_fit_with(
    table: &[(u64, Vec<BigRational>)],
    degree_cap: usize,
    denominator: &BigInt,
) -> Result<UniformityFit, SeriesError> {
    if table.len() < degree_cap + 2 {
        return Err(SeriesError::InvalidInput(format!(
            "degree cap {degree_cap} needs at least {} primes, got {}",
            degree_cap + 2,
            table.len()
        )));
    }
    let mut rows: Vec<&(u64, Vec<BigRational>)> = table.iter().collect();
    rows.sort_by_key(|r| r.0);
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(SeriesError::InvalidInput("primes must be distinct".into()));
    }
    let len = rows[0].1.len();
    if rows.iter().any(|r| r.1.len() != len) {
        return Err(SeriesError::InvalidInput("every prime needs the same n-range".into()));
    }
    let (held, train) = rows.split_last().unwrap();
    let d = BigRational::from_integer(denominator.clone());
    let mut polynomials = Vec::with_capacity(len);
    for n in 0..len {
        let pts: Vec<(BigRational, BigRational)> =
            train.iter().map(|(p, row)| (rat(*p as i64), row[n].clone())).collect();
        let poly = lagrange(&pts);
        let integral = poly.coeffs().iter().all(|c| (c * &d).is_integer());
        let fits = poly.degree().unwrap_or(0) <= degree_cap && integral;
        if !fits || poly.eval(&rat(held.0 as i64)) != held.1[n] {
            return Err(SeriesError::UniformityRejected { n, prime: held.0 });
        }
        polynomials.push(poly);
    }
    Ok(UniformityFit {
        polynomials,
        training: train.iter().map(|r| r.0).collect(),
        held_out: held.0,
        denominator: denominator.clone(),
    })
}

fn rf_only(f: &Formula) -> bool {
    match f {
        Formula::Atom(_, a, b) => {
            a.sort() == Sort::RF && a.vars().iter().chain(b.vars().iter()).all(|v| v.sort == Sort::RF)
        }
        Formula::Not(g) => rf_only(g),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => rf_only(a) && rf_only(b),
        Formula::Exists(v, g) | Formula::Forall(v, g) => v.sort == Sort::RF && rf_only(g),
    }
}

/// Number of points of `F_p^s` satisfying a residue-field formula in `s` free variables.
pub fn residue_point_count(psi: &Formula, p: u64) -> Result<u64, SeriesError> {
    if !rf_only(psi) {
        return Err(SeriesError::InvalidInput("residue counts need a formula in RF variables only".into()));
    }
    let spec = FieldSpec::mixed(p, 1)?;
    let free: Vec<_> = psi.free_vars().into_iter().collect();
    let total = (p as u128).pow(free.len() as u32);
    check_budget(total)?;
    let compiled = Compiled::new(psi, &SymbolTable::new(), &spec, &free, 1)?;
    let mut frame = compiled.frame();
    let mut count = 0u64;
    for code in 0..total as u64 {
        let mut c = code;
        for slot in frame.iter_mut().take(free.len()) {
            *slot = (c % p) as i64;
            c /= p;
        }
        let v = compiled.eval(&mut frame);
        debug_assert!(v.stable, "residue formulas are always decided");
        if v.value {
            count += 1;
        }
    }
    Ok(count)
}

/// Whether every coefficient of the expansion is a nonnegative integer.
pub fn has_counting_coefficients(f: &RationalFn, terms: usize) -> bool {
    f.expand(terms).iter().all(|c| c.is_integer() && !c.is_negative())
}
