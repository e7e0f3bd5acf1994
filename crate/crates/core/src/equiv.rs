//! Parametrized definable equivalence relations: axiom checks, box
//! invariance, class counting and the coefficient sequences `a_n`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{Compiled, EvalError, EvalVerdict};
use crate::formula::{parse_with, Formula, FormulaError, Sort, SymbolTable, Term, Var};
use crate::localfield::{check_budget, Characteristic, FieldError, FieldSpec};

/// Domain sizes up to this many points get exhaustive symmetry/transitivity checks.
pub const EXHAUSTIVE_POINTS: usize = 1_000;
/// Pair scans are exhaustive up to this many pairs.
pub const EXHAUSTIVE_PAIRS: usize = 1_000_000;
/// Number of sampled triples or pairs otherwise.
pub const SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5eed;
/// Candidates drawn per sampled triple member before settling for an unrelated one.
const RELATED_TRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("invalid relation: {0}")]
    InvalidRelation(String),
    #[error("{formula} is undecided at precision {precision} on {point}")]
    UnstableRelation { formula: String, precision: u32, point: String },
    #[error("relation is not box-invariant at any level <= {max_level}")]
    NotInvariant { max_level: u32 },
    #[error("{0}")]
    Precondition(String),
}

/// A formula `phi(x, y, z)` with domain `R(x, z)`, defining for each parameter
/// value `z` a relation on the tuples `x` of length `m` satisfying `R`.
#[derive(Debug, Clone)]
pub struct RelationSpec {
    pub phi: Formula,
    /// `None` means the whole of `O^m`.
    pub domain: Option<Formula>,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub params: Vec<Var>,
    pub symbols: SymbolTable,
}

impl RelationSpec {
    pub fn new(
        phi: Formula,
        domain: Option<Formula>,
        x: Vec<String>,
        y: Vec<String>,
        params: Vec<Var>,
        symbols: SymbolTable,
    ) -> Result<Self, EquivError> {
        let rel = RelationSpec { phi, domain, x, y, params, symbols };
        rel.validate()?;
        Ok(rel)
    }

    /// Parses `phi` and `domain` text with the given variable layout.
    pub fn parse(
        phi: &str,
        domain: Option<&str>,
        x: &[&str],
        y: &[&str],
        params: Vec<Var>,
        symbols: SymbolTable,
    ) -> Result<Self, EquivError> {
        let phi = parse_with(phi, &symbols)?;
        let domain = domain.map(|d| parse_with(d, &symbols)).transpose()?;
        Self::new(
            phi,
            domain,
            x.iter().map(|s| s.to_string()).collect(),
            y.iter().map(|s| s.to_string()).collect(),
            params,
            symbols,
        )
    }

    /// The congruence relation `min(ord f(x), ord(x - y)) >= n` on
    /// `{x : ord f(x) >= n}`, with `f` given as a VF term in `vars`.
    pub fn congruence(f: &str, vars: &[&str], symbols: SymbolTable) -> Result<Self, EquivError> {
        if vars.is_empty() {
            return Err(EquivError::InvalidRelation("congruence needs at least one variable".into()));
        }
        if vars.contains(&"n") {
            return Err(EquivError::InvalidRelation("`n` is reserved for the level parameter".into()));
        }
        let ys: Vec<String> = vars.iter().map(|v| format!("{v}'")).collect();
        let annotated: Vec<String> = vars.iter().map(|v| format!("{v}:VF")).collect();
        // Annotate every variable once so that unused ones still get sort VF.
        let anchors = annotated.iter().map(|v| format!("ord({v}) >= 0")).collect::<Vec<_>>().join(" /\\ ");
        let domain = format!("ord({f}) >= n:VG /\\ {anchors}");
        let mut phi = format!("ord({f}) >= n:VG");
        for (v, w) in vars.iter().zip(&ys) {
            phi.push_str(&format!(" /\\ ord({v}:VF - {w}:VF) >= n"));
        }
        let yrefs: Vec<&str> = ys.iter().map(|s| s.as_str()).collect();
        Self::parse(&phi, Some(&domain), vars, &yrefs, vec![Var::vg("n")], symbols)
    }

    /// `ord(x - y) >= n` on all of `O^m`, coordinatewise.
    pub fn ball(m: usize) -> Result<Self, EquivError> {
        let xs: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
        let ys: Vec<String> = (1..=m).map(|i| format!("y{i}")).collect();
        let phi = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| format!("ord({x}:VF - {y}:VF) >= n:VG"))
            .collect::<Vec<_>>()
            .join(" /\\ ");
        let xr: Vec<&str> = xs.iter().map(|s| s.as_str()).collect();
        let yr: Vec<&str> = ys.iter().map(|s| s.as_str()).collect();
        Self::parse(&phi, None, &xr, &yr, vec![Var::vg("n")], SymbolTable::new())
    }

    pub fn arity(&self) -> usize {
        self.x.len()
    }

    fn validate(&self) -> Result<(), EquivError> {
        let bad = |m: String| Err(EquivError::InvalidRelation(m));
        if self.x.is_empty() || self.x.len() != self.y.len() {
            return bad(format!("x has {} variables, y has {}", self.x.len(), self.y.len()));
        }
        let mut names = BTreeSet::new();
        for n in self.x.iter().chain(&self.y).chain(self.params.iter().map(|v| &v.name)) {
            if !names.insert(n.clone()) {
                return bad(format!("variable {n} is listed twice"));
            }
        }
        let allowed: BTreeSet<Var> = self.layout().into_iter().collect();
        for v in self.phi.free_vars() {
            if !allowed.contains(&v) {
                return bad(format!("phi has unexpected free variable {v}"));
            }
        }
        if let Some(d) = &self.domain {
            for v in d.free_vars() {
                if !allowed.contains(&v) || self.y.contains(&v.name) {
                    return bad(format!("domain has unexpected free variable {v}"));
                }
            }
        }
        Ok(())
    }

    /// Frame layout shared by phi and the domain: `x ++ y ++ params`.
    fn layout(&self) -> Vec<Var> {
        self.x
            .iter()
            .chain(&self.y)
            .map(|n| Var::vf(n.clone()))
            .chain(self.params.iter().cloned())
            .collect()
    }
}

/// Which axiom failed, with the offending points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub axiom: Axiom,
    pub witnesses: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    Reflexivity,
    Symmetry,
    Transitivity,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} fails at {}", self.axiom, self.witnesses.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquivalenceVerdict {
    Ok { exhaustive: bool, seed: u64 },
    Counterexample(Counterexample),
}

impl EquivalenceVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, EquivalenceVerdict::Ok { .. })
    }
}

/// Class count `a_{phi,K,z}` at one parameter value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub z: Vec<i64>,
    pub count: u64,
    pub precision_used: u32,
    /// Whether the count agreed with the recount at `precision_used + 1`.
    pub stable: bool,
    pub level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountPath {
    /// Union-find over boxes with an edge test for every box pair.
    BoxPairScan,
    /// Each box is compared with one representative per class found so far.
    Quotient,
    /// Union-find over all points at full precision (small instances only).
    PointPairScan,
}

/// Equivalence classes as sets of boxes `x mod m^level`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub spec: FieldSpec,
    pub level: u32,
    pub arity: usize,
    /// Each class lists its boxes (one truncated representative per
    /// coordinate), sorted; classes are ordered by their first box.
    pub classes: Vec<Vec<Vec<u64>>>,
    /// Whether some point of `O^m` lies outside the domain.
    pub domain_is_proper: bool,
    pub path: CountPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub vg_bound: Option<u32>,
    pub seed: u64,
    /// Use nominal verdicts where a formula is undecided. Only meaningful for
    /// provisional counts, e.g. to see whether a count grows with precision.
    pub lenient: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { vg_bound: None, seed: DEFAULT_SEED, lenient: false }
    }
}

/// Quantifier-free and free of analytic symbols, so a stable verdict on a
/// coarse truncation holds on all of its lifts.
fn prunable(f: &Formula) -> bool {
    fn term(t: &Term) -> bool {
        match t {
            Term::Var(_) | Term::Lit { .. } => true,
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => term(a) && term(b),
            Term::Neg(a) | Term::Pow(a, _) | Term::Ord(a) | Term::Ac(a) => term(a),
            Term::App(..) => false,
        }
    }
    match f {
        Formula::Atom(_, a, b) => term(a) && term(b),
        Formula::Not(g) => prunable(g),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => prunable(a) && prunable(b),
        Formula::Exists(..) | Formula::Forall(..) => false,
    }
}

struct Ctx {
    spec: FieldSpec,
    m: usize,
    phi: Compiled,
    domain: Option<Compiled>,
    /// The domain compiled at precisions `1..N`, when coarse verdicts may prune.
    coarse: Vec<Compiled>,
    base_frame: Vec<i64>,
    lenient: bool,
}

/// Domain points at full precision, as flattened coordinate tuples.
struct Points {
    coords: Vec<u64>,
    m: usize,
    /// Sorted point codes, for membership.
    codes: Vec<u64>,
    total: u64,
}

impl Points {
    fn len(&self) -> usize {
        self.coords.len() / self.m.max(1)
    }

    fn get(&self, i: usize) -> &[u64] {
        &self.coords[i * self.m..(i + 1) * self.m]
    }
}

impl Ctx {
    fn new(rel: &RelationSpec, spec: &FieldSpec, z: &[i64], opts: &CheckOptions) -> Result<Self, EquivError> {
        if z.len() != rel.params.len() {
            return Err(EquivError::InvalidRelation(format!(
                "{} parameter values given for {} parameters",
                z.len(),
                rel.params.len()
            )));
        }
        let layout = rel.layout();
        let bound = opts.vg_bound.unwrap_or(spec.precision()).max(1);
        let phi = Compiled::new(&rel.phi, &rel.symbols, spec, &layout, bound)?;
        let domain = rel
            .domain
            .as_ref()
            .map(|d| Compiled::new(d, &rel.symbols, spec, &layout, bound))
            .transpose()?;
        let m = rel.arity();
        let mut base_frame = phi.frame();
        if let Some(d) = &domain {
            if d.frame().len() > base_frame.len() {
                base_frame.resize(d.frame().len(), 0);
            }
        }
        for (i, (v, val)) in rel.params.iter().zip(z).enumerate() {
            base_frame[2 * m + i] = match v.sort {
                Sort::RF => val.rem_euclid(spec.p() as i64),
                Sort::VF => return Err(EquivError::InvalidRelation("VF parameters are not supported".into())),
                Sort::VG => *val,
            };
        }
        let mut coarse = Vec::new();
        if let Some(d) = rel.domain.as_ref().filter(|d| prunable(d)) {
            for k in 1..spec.precision() {
                let c = Compiled::new(d, &rel.symbols, &spec.with_precision(k)?, &layout, bound)?;
                if c.frame().len() > base_frame.len() {
                    base_frame.resize(c.frame().len(), 0);
                }
                coarse.push(c);
            }
        }
        Ok(Ctx { spec: *spec, m, phi, domain, coarse, base_frame, lenient: opts.lenient })
    }

    fn frame(&self) -> Vec<i64> {
        self.base_frame.clone()
    }

    fn phi(&self, fr: &mut [i64], x: &[u64], y: &[u64]) -> EvalVerdict {
        for i in 0..self.m {
            fr[i] = x[i] as i64;
            fr[self.m + i] = y[i] as i64;
        }
        self.phi.eval(fr)
    }

    fn phi_stable(&self, fr: &mut [i64], x: &[u64], y: &[u64]) -> Result<bool, EquivError> {
        let v = self.phi(fr, x, y);
        if !v.stable && !self.lenient {
            return Err(self.unstable("phi", &[x, y]));
        }
        Ok(v.value)
    }

    fn in_domain(&self, fr: &mut [i64], x: &[u64]) -> EvalVerdict {
        match &self.domain {
            None => EvalVerdict::TRUE,
            Some(d) => {
                for i in 0..self.m {
                    fr[i] = x[i] as i64;
                }
                d.eval(fr)
            }
        }
    }

    fn unstable(&self, formula: &str, points: &[&[u64]]) -> EquivError {
        EquivError::UnstableRelation {
            formula: formula.to_string(),
            precision: self.spec.precision(),
            point: points.iter().map(|p| self.show(p)).collect::<Vec<_>>().join(", "),
        }
    }

    fn show(&self, x: &[u64]) -> String {
        let parts: Vec<String> = x
            .iter()
            .map(|r| self.spec.from_repr(*r).map(|e| e.to_string()).unwrap_or_default())
            .collect();
        format!("({})", parts.join(", "))
    }

    /// The domain at full precision. A box whose membership is already decided
    /// at a coarser precision is taken or dropped whole, so the ambient space
    /// is only scanned where the domain's boundary lies.
    fn points(&self) -> Result<Points, EquivError> {
        let size = self.spec.size();
        let total = (size as u128).pow(self.m as u32);
        if self.coarse.is_empty() || total > u64::MAX as u128 {
            check_budget(total)?;
        }
        let total = total as u64;
        let mut fr = self.frame();
        let mut codes = Vec::new();
        if self.coarse.is_empty() {
            let mut x = vec![0u64; self.m];
            for code in 0..total {
                let mut c = code;
                for xi in x.iter_mut() {
                    *xi = c % size;
                    c /= size;
                }
                if self.member_at_top(&mut fr, &x)? {
                    codes.push(code);
                }
            }
        } else {
            self.descend(&mut fr, &mut codes)?;
            codes.sort_unstable();
        }
        let mut coords = Vec::with_capacity(codes.len() * self.m);
        for &code in &codes {
            let mut c = code;
            for _ in 0..self.m {
                coords.push(c % size);
                c /= size;
            }
        }
        Ok(Points { coords, m: self.m, codes, total })
    }

    fn member_at_top(&self, fr: &mut [i64], x: &[u64]) -> Result<bool, EquivError> {
        let v = self.in_domain(fr, x);
        if !v.stable && !self.lenient {
            return Err(self.unstable("domain", &[x]));
        }
        Ok(v.value)
    }

    /// Depth-first refinement of boxes with undecided domain membership.
    fn descend(&self, fr: &mut [i64], codes: &mut Vec<u64>) -> Result<(), EquivError> {
        let p = self.spec.p();
        let prec = self.spec.precision();
        let children = p.pow(self.m as u32);
        let mut work: u128 = 0;
        let mut stack = vec![(0u32, vec![0u64; self.m])];
        while let Some((k, x)) = stack.pop() {
            work += 1;
            check_budget(work)?;
            let decided = match k {
                0 => None,
                k if k == prec => Some(self.member_at_top(fr, &x)?),
                k => {
                    for i in 0..self.m {
                        fr[i] = x[i] as i64;
                    }
                    let v = self.coarse[k as usize - 1].eval(fr);
                    v.stable.then_some(v.value)
                }
            };
            match decided {
                Some(false) => {}
                Some(true) => {
                    let lifts = self.spec.p_pow(prec - k);
                    let count = (lifts as u128).pow(self.m as u32);
                    work += count;
                    check_budget(work)?;
                    let step = p.pow(k);
                    for t in 0..count as u64 {
                        let mut rest = t;
                        let mut code = 0u64;
                        let mut scale = 1u64;
                        for &xi in &x {
                            code += (xi + (rest % lifts) * step) * scale;
                            rest /= lifts;
                            scale *= self.spec.size();
                        }
                        codes.push(code);
                    }
                }
                None => {
                    let step = p.pow(k);
                    for d in 0..children {
                        let mut rest = d;
                        let child = x
                            .iter()
                            .map(|&xi| {
                                let c = xi + (rest % p) * step;
                                rest /= p;
                                c
                            })
                            .collect();
                        stack.push((k + 1, child));
                    }
                }
            }
        }
        Ok(())
    }

    fn code(&self, x: &[u64]) -> u64 {
        x.iter().rev().fold(0u64, |acc, &r| acc * self.spec.size() + r)
    }

    fn contains(&self, pts: &Points, x: &[u64]) -> bool {
        pts.codes.binary_search(&self.code(x)).is_ok()
    }

    fn truncate(&self, x: &[u64], level: u32) -> Vec<u64> {
        x.iter().map(|&r| self.spec.truncate_raw(r, level)).collect()
    }

    /// A point agreeing with `x` to a random depth in each coordinate, or a
    /// small translate `x + c p^k`.
    fn near(&self, rng: &mut ChaCha8Rng, x: &[u64]) -> Vec<u64> {
        let n = self.spec.precision();
        let p = self.spec.p();
        x.iter()
            .map(|&r| {
                let k = rng.gen_range(0..=n);
                if k < n && rng.gen_bool(0.5) {
                    let c = self.spec.from_int(rng.gen_range(-2i64..=2)).repr();
                    return self.spec.add_raw(r, self.spec.mul_raw(c, p.pow(k)));
                }
                let low = self.spec.truncate_raw(r, k);
                let high = rng.gen_range(0..p.pow(n - k));
                low + high * p.pow(k)
            })
            .collect()
    }

    fn sample_near_in_domain(&self, rng: &mut ChaCha8Rng, pts: &Points, x: &[u64]) -> Vec<u64> {
        for _ in 0..16 {
            let y = self.near(rng, x);
            if self.contains(pts, &y) {
                return y;
            }
        }
        pts.get(rng.gen_range(0..pts.len())).to_vec()
    }

    /// Like `sample_near_in_domain`, preferring a point related to `x`.
    fn sample_related(
        &self,
        fr: &mut [i64],
        rng: &mut ChaCha8Rng,
        pts: &Points,
        x: &[u64],
    ) -> Result<Vec<u64>, EquivError> {
        let mut y = self.sample_near_in_domain(rng, pts, x);
        for _ in 0..RELATED_TRIES {
            if self.phi_stable(fr, x, &y)? {
                break;
            }
            y = self.sample_near_in_domain(rng, pts, x);
        }
        Ok(y)
    }
}

/// Checks reflexivity on the domain exhaustively, and symmetry and
/// transitivity exhaustively on small domains or on seeded samples.
pub fn check_equivalence(
    rel: &RelationSpec,
    spec: &FieldSpec,
    z: &[i64],
) -> Result<EquivalenceVerdict, EquivError> {
    check_equivalence_with(rel, spec, z, &CheckOptions::default())
}

pub fn check_equivalence_with(
    rel: &RelationSpec,
    spec: &FieldSpec,
    z: &[i64],
    opts: &CheckOptions,
) -> Result<EquivalenceVerdict, EquivError> {
    let ctx = Ctx::new(rel, spec, z, opts)?;
    let pts = ctx.points()?;
    check_on_points(&ctx, &pts, opts.seed)
}

fn check_on_points(ctx: &Ctx, pts: &Points, seed: u64) -> Result<EquivalenceVerdict, EquivError> {
    let mut fr = ctx.frame();
    let n = pts.len();
    let cex = |axiom, pts: &[&[u64]]| {
        EquivalenceVerdict::Counterexample(Counterexample {
            axiom,
            witnesses: pts.iter().map(|p| ctx.show(p)).collect(),
        })
    };
    for i in 0..n {
        let x = pts.get(i);
        if !ctx.phi_stable(&mut fr, x, x)? {
            return Ok(cex(Axiom::Reflexivity, &[x]));
        }
    }
    if n <= EXHAUSTIVE_POINTS {
        let words = n.div_ceil(64).max(1);
        let mut rows = vec![0u64; n * words];
        for i in 0..n {
            for j in 0..n {
                if ctx.phi_stable(&mut fr, pts.get(i), pts.get(j))? {
                    rows[i * words + j / 64] |= 1 << (j % 64);
                }
            }
        }
        let bit = |rows: &[u64], i: usize, j: usize| rows[i * words + j / 64] >> (j % 64) & 1 == 1;
        for i in 0..n {
            for j in 0..n {
                if bit(&rows, i, j) && !bit(&rows, j, i) {
                    return Ok(cex(Axiom::Symmetry, &[pts.get(i), pts.get(j)]));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j || !bit(&rows, i, j) {
                    continue;
                }
                // Row j must be contained in row i.
                for w in 0..words {
                    let missing = rows[j * words + w] & !rows[i * words + w];
                    if missing != 0 {
                        let k = w * 64 + missing.trailing_zeros() as usize;
                        return Ok(cex(Axiom::Transitivity, &[pts.get(i), pts.get(j), pts.get(k)]));
                    }
                }
            }
        }
        return Ok(EquivalenceVerdict::Ok { exhaustive: true, seed });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SAMPLES {
        let x = pts.get(rng.gen_range(0..n)).to_vec();
        let y = ctx.sample_related(&mut fr, &mut rng, pts, &x)?;
        let w = ctx.sample_related(&mut fr, &mut rng, pts, &y)?;
        let xy = ctx.phi_stable(&mut fr, &x, &y)?;
        let yx = ctx.phi_stable(&mut fr, &y, &x)?;
        if xy != yx {
            let (a, b) = if xy { (&x, &y) } else { (&y, &x) };
            return Ok(cex(Axiom::Symmetry, &[a, b]));
        }
        if xy && ctx.phi_stable(&mut fr, &y, &w)? && !ctx.phi_stable(&mut fr, &x, &w)? {
            return Ok(cex(Axiom::Transitivity, &[&x, &y, &w]));
        }
    }
    Ok(EquivalenceVerdict::Ok { exhaustive: false, seed })
}

/// Least `L <= max_level` (default: the precision) such that the domain is a
/// union of boxes `x mod m^L` and `phi(x, y)` depends only on the boxes of `x` and `y`.
pub fn invariance_level(
    rel: &RelationSpec,
    spec: &FieldSpec,
    z: &[i64],
    max_level: Option<u32>,
) -> Result<u32, EquivError> {
    let opts = CheckOptions::default();
    let ctx = Ctx::new(rel, spec, z, &opts)?;
    let pts = ctx.points()?;
    level_on_points(&ctx, &pts, max_level.unwrap_or(spec.precision()), opts.seed)
}

fn level_on_points(ctx: &Ctx, pts: &Points, max_level: u32, seed: u64) -> Result<u32, EquivError> {
    let prec = ctx.spec.precision();
    let mut fr = ctx.frame();
    for level in 0..=max_level.min(prec) {
        if !domain_is_box_union(ctx, pts, level) {
            continue;
        }
        if level == prec || phi_box_invariant(ctx, pts, level, seed, &mut fr)? {
            return Ok(level);
        }
    }
    Err(EquivError::NotInvariant { max_level })
}

fn domain_is_box_union(ctx: &Ctx, pts: &Points, level: u32) -> bool {
    let per_box = (ctx.spec.p() as u128).pow((ctx.spec.precision() - level) * ctx.m as u32);
    let mut counts: HashMap<Vec<u64>, u128> = HashMap::new();
    for i in 0..pts.len() {
        *counts.entry(ctx.truncate(pts.get(i), level)).or_default() += 1;
    }
    counts.values().all(|&c| c == per_box)
}

fn phi_box_invariant(ctx: &Ctx, pts: &Points, level: u32, seed: u64, fr: &mut [i64]) -> Result<bool, EquivError> {
    let n = pts.len();
    let same = |fr: &mut [i64], x: &[u64], y: &[u64]| -> Result<bool, EquivError> {
        let a = ctx.phi_stable(fr, x, y)?;
        let b = ctx.phi_stable(fr, &ctx.truncate(x, level), &ctx.truncate(y, level))?;
        Ok(a == b)
    };
    if n.saturating_mul(n) <= EXHAUSTIVE_PAIRS {
        for i in 0..n {
            for j in 0..n {
                if !same(fr, pts.get(i), pts.get(j))? {
                    return Ok(false);
                }
            }
        }
        return Ok(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ level as u64);
    for _ in 0..SAMPLES {
        let x = pts.get(rng.gen_range(0..n)).to_vec();
        let y = ctx.sample_near_in_domain(&mut rng, pts, &x);
        if !same(fr, &x, &y)? {
            return Ok(false);
        }
    }
    Ok(true)
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

fn boxes_of(ctx: &Ctx, pts: &Points, level: u32) -> Vec<Vec<u64>> {
    let set: BTreeSet<Vec<u64>> = (0..pts.len()).map(|i| ctx.truncate(pts.get(i), level)).collect();
    let mut boxes: Vec<Vec<u64>> = set.into_iter().collect();
    boxes.sort_by_key(|b| ctx.code(b));
    boxes
}

fn group(labels: Vec<usize>, items: Vec<Vec<u64>>, ctx: &Ctx) -> Vec<Vec<Vec<u64>>> {
    let mut by_label: HashMap<usize, Vec<Vec<u64>>> = HashMap::new();
    for (l, b) in labels.into_iter().zip(items) {
        by_label.entry(l).or_default().push(b);
    }
    let mut classes: Vec<Vec<Vec<u64>>> = by_label.into_values().collect();
    for c in classes.iter_mut() {
        c.sort_by_key(|b| ctx.code(b));
    }
    classes.sort_by_key(|c| ctx.code(&c[0]));
    classes
}

fn partition_on_points(ctx: &Ctx, pts: &Points, level: u32, path: Option<CountPath>) -> Result<Partition, EquivError> {
    let mut fr = ctx.frame();
    let boxes = boxes_of(ctx, pts, level);
    let nb = boxes.len();
    let path = path.unwrap_or(if nb.saturating_mul(nb) <= EXHAUSTIVE_PAIRS {
        CountPath::BoxPairScan
    } else {
        CountPath::Quotient
    });
    let classes = match path {
        CountPath::BoxPairScan => {
            let mut uf = UnionFind::new(nb);
            for i in 0..nb {
                for j in (i + 1)..nb {
                    if ctx.phi_stable(&mut fr, &boxes[i], &boxes[j])? {
                        uf.union(i, j);
                    }
                }
            }
            let labels = (0..nb).map(|i| uf.find(i)).collect();
            group(labels, boxes, ctx)
        }
        CountPath::Quotient => {
            let mut reps: Vec<usize> = Vec::new();
            let mut labels = Vec::with_capacity(nb);
            for i in 0..nb {
                let mut found = None;
                for (c, &r) in reps.iter().enumerate() {
                    if ctx.phi_stable(&mut fr, &boxes[i], &boxes[r])? {
                        found = Some(c);
                        break;
                    }
                }
                labels.push(found.unwrap_or_else(|| {
                    reps.push(i);
                    reps.len() - 1
                }));
            }
            group(labels, boxes, ctx)
        }
        CountPath::PointPairScan => {
            let n = pts.len();
            if n > 10_000 {
                return Err(EquivError::Precondition(format!(
                    "point pair scan limited to 10^4 points, domain has {n}"
                )));
            }
            let mut uf = UnionFind::new(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if uf.find(i) != uf.find(j) && ctx.phi_stable(&mut fr, pts.get(i), pts.get(j))? {
                        uf.union(i, j);
                    }
                }
            }
            let labels: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
            let items: Vec<Vec<u64>> = (0..n).map(|i| pts.get(i).to_vec()).collect();
            let point_classes = group(labels, items, ctx);
            // Report the classes as boxes at the requested level.
            point_classes
                .into_iter()
                .map(|c| {
                    let set: BTreeSet<Vec<u64>> = c.iter().map(|x| ctx.truncate(x, level)).collect();
                    let mut v: Vec<Vec<u64>> = set.into_iter().collect();
                    v.sort_by_key(|b| ctx.code(b));
                    v
                })
                .collect()
        }
    };
    Ok(Partition {
        spec: ctx.spec,
        level,
        arity: ctx.m,
        classes,
        domain_is_proper: (pts.len() as u64) < pts.total,
        path,
    })
}

/// Splits the domain into classes of boxes at the invariance level.
/// Assumes the relation passed `check_equivalence` at this precision.
pub fn partition(rel: &RelationSpec, spec: &FieldSpec, z: &[i64]) -> Result<Partition, EquivError> {
    partition_with(rel, spec, z, &CheckOptions::default(), None)
}

pub fn partition_with(
    rel: &RelationSpec,
    spec: &FieldSpec,
    z: &[i64],
    opts: &CheckOptions,
    path: Option<CountPath>,
) -> Result<Partition, EquivError> {
    let ctx = Ctx::new(rel, spec, z, opts)?;
    let pts = ctx.points()?;
    let level = level_on_points(&ctx, &pts, spec.precision(), opts.seed)?;
    partition_on_points(&ctx, &pts, level, path)
}

/// Number of classes at precision `N`, recounted at `N + 1` for stability.
pub fn count_classes(rel: &RelationSpec, spec: &FieldSpec, z: &[i64]) -> Result<ClassCount, EquivError> {
    count_classes_with(rel, spec, z, &CheckOptions::default(), None)
}

pub fn count_classes_with(
    rel: &RelationSpec,
    spec: &FieldSpec,
    z: &[i64],
    opts: &CheckOptions,
    path: Option<CountPath>,
) -> Result<ClassCount, EquivError> {
    let here = partition_with(rel, spec, z, opts, path)?;
    let finer = spec.with_precision(spec.precision() + 1)?;
    let finer_opts = CheckOptions { vg_bound: opts.vg_bound.map(|b| b + 1), ..*opts };
    let there = partition_with(rel, &finer, z, &finer_opts, path)?;
    Ok(ClassCount {
        z: z.to_vec(),
        count: here.classes.len() as u64,
        precision_used: spec.precision(),
        stable: here.classes.len() == there.classes.len(),
        level: here.level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecisionPolicy {
    /// Start at `N = n + 1` and escalate up to `N = n + 1 + max_extra`.
    Auto { max_extra: u32 },
    Fixed(u32),
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy::Auto { max_extra: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeriesOptions {
    pub precision: PrecisionPolicy,
    pub check: CheckOptions,
    /// Count the complement of the domain as one extra class when nonempty.
    pub extra_class: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Coefficient {
    Count(ClassCount),
    /// The count kept growing with the precision.
    Divergent { counts: Vec<(u32, u64)> },
    /// The relation failed an axiom at this `n`.
    NotEquivalence { counterexample: Counterexample },
    Error { message: String },
}

impl Coefficient {
    pub fn value(&self) -> Option<u64> {
        match self {
            Coefficient::Count(c) if c.stable => Some(c.count),
            _ => None,
        }
    }
}

/// `a_n` for each `n`, with `n` substituted for the single VG parameter.
pub fn series_coeffs(
    rel: &RelationSpec,
    case: Characteristic,
    p: u64,
    n_range: std::ops::RangeInclusive<u32>,
    opts: &SeriesOptions,
) -> Result<Vec<(u32, Coefficient)>, EquivError> {
    if rel.params.len() != 1 || rel.params[0].sort != Sort::VG {
        return Err(EquivError::InvalidRelation(
            "series needs exactly one VG parameter (the level n)".into(),
        ));
    }
    let mut out = Vec::new();
    for n in n_range {
        out.push((n, coefficient(rel, case, p, n, opts)));
    }
    Ok(out)
}

enum Attempt {
    Count(ClassCount),
    Broken(Counterexample),
}

fn attempt(rel: &RelationSpec, spec: &FieldSpec, z: &[i64], opts: &CheckOptions, extra_class: bool) -> Result<Attempt, EquivError> {
    let ctx = Ctx::new(rel, spec, z, opts)?;
    let pts = ctx.points()?;
    if !opts.lenient {
        if let EquivalenceVerdict::Counterexample(c) = check_on_points(&ctx, &pts, opts.seed)? {
            return Ok(Attempt::Broken(c));
        }
    }
    let mut cc = count_classes_with(rel, spec, z, opts, None)?;
    if extra_class && (pts.len() as u64) < pts.total {
        cc.count += 1;
    }
    Ok(Attempt::Count(cc))
}

fn coefficient(rel: &RelationSpec, case: Characteristic, p: u64, n: u32, opts: &SeriesOptions) -> Coefficient {
    let (start, extra) = match opts.precision {
        PrecisionPolicy::Auto { max_extra } => (n + 1, max_extra),
        PrecisionPolicy::Fixed(k) => (k, 0),
    };
    let z = [n as i64];
    let mut history: Vec<(u32, u64)> = Vec::new();
    // Counts with undecided verdicts replaced by nominal ones.
    let mut provisional: Vec<(u32, u64)> = Vec::new();
    let mut last_err = String::new();
    for prec in start..=start + extra {
        let spec = match FieldSpec::new(case, p, prec) {
            Ok(s) => s,
            Err(e) => return Coefficient::Error { message: e.to_string() },
        };
        let strict = CheckOptions {
            vg_bound: opts.check.vg_bound.map(|b| b + (prec - start)),
            ..opts.check
        };
        match attempt(rel, &spec, &z, &strict, opts.extra_class) {
            Ok(Attempt::Count(cc)) => {
                history.push((prec, cc.count));
                if cc.stable {
                    return Coefficient::Count(cc);
                }
            }
            Ok(Attempt::Broken(c)) => return Coefficient::NotEquivalence { counterexample: c },
            Err(e @ EquivError::UnstableRelation { .. }) => {
                last_err = e.to_string();
                let lenient = CheckOptions { lenient: true, ..strict };
                if let Ok(Attempt::Count(cc)) = attempt(rel, &spec, &z, &lenient, opts.extra_class) {
                    provisional.push((prec, cc.count));
                }
            }
            Err(e) => {
                last_err = e.to_string();
                break;
            }
        }
    }
    let grows = |h: &[(u32, u64)]| h.len() >= 2 && h.windows(2).all(|w| w[1].1 > w[0].1);
    if grows(&history) {
        return Coefficient::Divergent { counts: history };
    }
    if history.is_empty() && grows(&provisional) {
        return Coefficient::Divergent { counts: provisional };
    }
    if let Some(&(prec, count)) = history.last() {
        return Coefficient::Error {
            message: format!("count {count} at precision {prec} did not stabilize"),
        };
    }
    Coefficient::Error { message: last_err }
}

/// One row of a mixed-versus-equal characteristic comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldComparisonRow {
    pub p: u64,
    pub n: u32,
    pub mixed: Option<u64>,
    pub equal: Option<u64>,
    pub agree: bool,
}

/// Runs identical series jobs over `Z_p` and `F_p[[t]]` and diffs the tables.
pub fn compare_fields(
    rel: &RelationSpec,
    primes: &[u64],
    n_range: std::ops::RangeInclusive<u32>,
    opts: &SeriesOptions,
) -> Result<Vec<FieldComparisonRow>, EquivError> {
    let mut rows = Vec::new();
    for &p in primes {
        let mixed = series_coeffs(rel, Characteristic::Mixed, p, n_range.clone(), opts)?;
        let equal = series_coeffs(rel, Characteristic::Equal, p, n_range.clone(), opts)?;
        for ((n, a), (_, b)) in mixed.into_iter().zip(equal) {
            let (mv, ev) = (a.value(), b.value());
            rows.push(FieldComparisonRow { p, n, mixed: mv, equal: ev, agree: mv.is_some() && mv == ev });
        }
    }
    Ok(rows)
}
