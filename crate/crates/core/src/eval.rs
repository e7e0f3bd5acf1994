//! Finite-precision evaluation of formulas with a stability verdict.
//!
//! A valued-field value at precision `N` stands for a whole residue class
//! modulo `m^N`, so every observation is made conservatively:
//!
//! * `ord` of an element that is zero at precision `N` is the interval
//!   `[N, +inf]`; value-group terms are evaluated in interval arithmetic and a
//!   comparison is stable only when the intervals decide it.
//! * VF equality is stable only when it fails (distinct residues).
//! * `ac` of an element that is zero at precision `N` is unknown.
//! * Connectives follow strong Kleene logic; an undecided subformula does not
//!   taint a verdict that the other operand already decides.
//! * VG quantifiers range over `[-B, B]`; witnesses at `|n| = B` and the
//!   unexplored exterior count as undecided.
//!
//! Undecided verdicts still carry a nominal truth value, computed as if the
//! zero-at-precision elements were exactly zero.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::formula::{AnalyticSymbol, Formula, Rel, Sort, SortError, SymbolTable, Term, Var};
use crate::localfield::{check_budget, FieldError, FieldSpec, TruncElem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct EvalVerdict {
    pub value: bool,
    pub stable: bool,
}

impl EvalVerdict {
    pub const TRUE: EvalVerdict = EvalVerdict { value: true, stable: true };
    pub const FALSE: EvalVerdict = EvalVerdict { value: false, stable: true };

    pub fn unknown(nominal: bool) -> EvalVerdict {
        EvalVerdict { value: nominal, stable: false }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> EvalVerdict {
        EvalVerdict { value: !self.value, stable: self.stable }
    }

    pub fn and(self, o: EvalVerdict) -> EvalVerdict {
        EvalVerdict {
            value: self.value && o.value,
            stable: (self.stable && o.stable)
                || (self.stable && !self.value)
                || (o.stable && !o.value),
        }
    }

    pub fn or(self, o: EvalVerdict) -> EvalVerdict {
        self.not().and(o.not()).not()
    }

    /// Stable and true.
    pub fn holds(self) -> bool {
        self.stable && self.value
    }

    /// Stable and false.
    pub fn fails(self) -> bool {
        self.stable && !self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("variable {name} is bound to a {found} value but used as {expected}")]
    ValueSortMismatch { name: String, expected: Sort, found: Sort },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error("symbol {symbol} is known modulo t^{t_precision}, which is too coarse for precision {precision}")]
    InsufficientTSeriesPrecision { symbol: String, t_precision: u32, precision: u32 },
    #[error("no two consecutive stable agreeing verdicts between precision {from} and {to}")]
    StabilizationFailure { from: u32, to: u32, last: EvalVerdict },
    #[error("VG quantifier bound must be at least 1")]
    InvalidBound,
}

/// A value of one of the three sorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    VF(TruncElem),
    RF(u64),
    VG(i64),
}

impl Value {
    pub fn sort(&self) -> Sort {
        match self {
            Value::VF(_) => Sort::VF,
            Value::RF(_) => Sort::RF,
            Value::VG(_) => Sort::VG,
        }
    }
}

/// Assignment of values to free variables, plus an optional VG bound `B`
/// (defaults to the precision).
#[derive(Debug, Clone, Default)]
pub struct Environment {
    values: BTreeMap<String, Value>,
    vg_bound: Option<u32>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn vf(self, name: &str, e: TruncElem) -> Self {
        self.with(name, Value::VF(e))
    }

    pub fn rf(self, name: &str, u: u64) -> Self {
        self.with(name, Value::RF(u))
    }

    pub fn vg(self, name: &str, n: i64) -> Self {
        self.with(name, Value::VG(n))
    }

    pub fn bound(mut self, b: u32) -> Self {
        self.vg_bound = Some(b);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn vg_bound(&self) -> Option<u32> {
        self.vg_bound
    }
}

/// Evaluates `f` (no analytic symbols) at the given precision.
pub fn eval(f: &Formula, env: &Environment, spec: &FieldSpec) -> Result<EvalVerdict, EvalError> {
    eval_with(f, env, spec, &SymbolTable::new())
}

pub fn eval_with(
    f: &Formula,
    env: &Environment,
    spec: &FieldSpec,
    symbols: &SymbolTable,
) -> Result<EvalVerdict, EvalError> {
    let bound = env.vg_bound.unwrap_or(spec.precision());
    let free: Vec<Var> = f.free_vars().into_iter().collect();
    let compiled = Compiled::new(f, symbols, spec, &free, bound)?;
    let mut frame = compiled.frame();
    for (i, v) in free.iter().enumerate() {
        let value = env.get(&v.name).ok_or_else(|| EvalError::UnboundVariable(v.name.clone()))?;
        if value.sort() != v.sort {
            return Err(EvalError::ValueSortMismatch {
                name: v.name.clone(),
                expected: v.sort,
                found: value.sort(),
            });
        }
        frame[i] = match value {
            Value::VF(e) => at_precision(e, spec)?.repr() as i64,
            Value::RF(u) => (*u % spec.p()) as i64,
            Value::VG(n) => *n,
        };
    }
    Ok(compiled.eval(&mut frame))
}

fn at_precision(e: &TruncElem, spec: &FieldSpec) -> Result<TruncElem, FieldError> {
    let es = e.spec();
    if es.case() != spec.case() || es.p() != spec.p() {
        return Err(FieldError::SpecMismatch { left: *es, right: *spec });
    }
    if es.precision() <= spec.precision() {
        e.lift_precision(spec.precision())
    } else {
        e.reduce_precision(spec.precision())
    }
}

/// Evaluates at precisions `N, N+1, ..., N+max_extra` until two consecutive
/// verdicts are stable and agree.
pub fn eval_stable(
    f: &Formula,
    env: &Environment,
    spec: &FieldSpec,
    max_extra: u32,
) -> Result<EvalVerdict, EvalError> {
    eval_stable_with(f, env, spec, &SymbolTable::new(), max_extra)
}

pub fn eval_stable_with(
    f: &Formula,
    env: &Environment,
    spec: &FieldSpec,
    symbols: &SymbolTable,
    max_extra: u32,
) -> Result<EvalVerdict, EvalError> {
    let base_bound = env.vg_bound.unwrap_or(spec.precision());
    let mut prev: Option<EvalVerdict> = None;
    let mut last = EvalVerdict::unknown(false);
    for k in 0..=max_extra {
        let s = spec.with_precision(spec.precision() + k)?;
        let e = env.clone().bound(base_bound + k);
        let v = eval_with(f, &e, &s, symbols)?;
        if let Some(p) = prev {
            if p.stable && v.stable && p.value == v.value {
                return Ok(v);
            }
        }
        prev = Some(v);
        last = v;
    }
    Err(EvalError::StabilizationFailure {
        from: spec.precision(),
        to: spec.precision() + max_extra,
        last,
    })
}

/// `sum_{i<N} a_i(args) w^i` in the truncation.
pub fn eval_analytic(
    sym: &AnalyticSymbol,
    args: &[TruncElem],
    spec: &FieldSpec,
) -> Result<TruncElem, EvalError> {
    if sym.t_precision < spec.precision() {
        return Err(EvalError::InsufficientTSeriesPrecision {
            symbol: sym.name.clone(),
            t_precision: sym.t_precision,
            precision: spec.precision(),
        });
    }
    if args.len() != sym.arity {
        return Err(SortError::new(
            format!("{} has arity {} but got {} arguments", sym.name, sym.arity, args.len()),
            "",
        )
        .into());
    }
    let mut raw = Vec::with_capacity(args.len());
    for a in args {
        raw.push(at_precision(a, spec)?.repr());
    }
    Ok(spec.from_repr(sym.evaluate_raw(spec, &raw))?)
}

// Compiled representation: variables live in numbered slots of an `i64`
// frame (VF/RF canonical representatives, VG integers).

const INF: i64 = 1 << 60;

fn ext_add(a: i64, b: i64) -> i64 {
    if a >= INF || b >= INF {
        if a <= -INF || b <= -INF { 0 } else { INF }
    } else if a <= -INF || b <= -INF {
        -INF
    } else {
        (a + b).clamp(-INF, INF)
    }
}

fn ext_scale(c: i64, a: i64) -> i64 {
    if c == 0 {
        0
    } else if a >= INF || a <= -INF {
        if (a > 0) == (c > 0) { INF } else { -INF }
    } else {
        a.saturating_mul(c).clamp(-INF, INF)
    }
}

/// Value-group value: a certified interval plus the nominal value.
#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: i64,
    hi: i64,
    nominal: i64,
}

impl Interval {
    fn exact(n: i64) -> Self {
        Interval { lo: n, hi: n, nominal: n }
    }

    fn is_exact(&self) -> bool {
        self.lo == self.hi && self.lo.abs() < INF
    }
}

enum Vf {
    Var(usize),
    Const(u64),
    Add(Box<Vf>, Box<Vf>),
    Sub(Box<Vf>, Box<Vf>),
    Mul(Box<Vf>, Box<Vf>),
    Neg(Box<Vf>),
    Pow(Box<Vf>, u32),
    App(usize, Vec<Vf>),
}

enum Rf {
    Var(usize),
    Const(u64),
    Add(Box<Rf>, Box<Rf>),
    Sub(Box<Rf>, Box<Rf>),
    Mul(Box<Rf>, Box<Rf>),
    Neg(Box<Rf>),
    Pow(Box<Rf>, u32),
    Ac(Vf),
}

enum Vg {
    Var(usize),
    Const(i64),
    Add(Box<Vg>, Box<Vg>),
    Sub(Box<Vg>, Box<Vg>),
    Neg(Box<Vg>),
    Scale(i64, Box<Vg>),
    Ord(Vf),
}

enum Node {
    VfEq(Vf, Vf),
    RfEq(Rf, Rf),
    VgCmp(Rel, Vg, Vg),
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Implies(Box<Node>, Box<Node>),
    Quant { exists: bool, sort: Sort, slot: usize, body: Box<Node> },
}

/// A formula compiled against a fixed precision, symbol table and slot layout.
pub struct Compiled {
    root: Node,
    spec: FieldSpec,
    bound: i64,
    frame_len: usize,
    symbols: Vec<AnalyticSymbol>,
}

struct Compiler<'a> {
    table: &'a SymbolTable,
    spec: FieldSpec,
    scope: Vec<(String, Sort, usize)>,
    next_slot: usize,
    max_slot: usize,
    symbols: Vec<AnalyticSymbol>,
    has_vf_quantifier: bool,
}

impl Compiler<'_> {
    fn lookup(&self, v: &Var) -> Result<usize, EvalError> {
        match self.scope.iter().rev().find(|(n, _, _)| *n == v.name) {
            Some((_, sort, slot)) if *sort == v.sort => Ok(*slot),
            Some((_, sort, _)) => Err(EvalError::Sort(SortError::new(
                format!("variable {} used as {} but bound as {}", v.name, v.sort, sort),
                "",
            ))),
            None => Err(EvalError::UnboundVariable(v.name.clone())),
        }
    }

    fn sort_fault(&self, what: &str, t: &Term) -> EvalError {
        EvalError::Sort(SortError::new(format!("{what}: {t}"), ""))
    }

    fn vf(&mut self, t: &Term) -> Result<Vf, EvalError> {
        let spec = self.spec;
        Ok(match t {
            Term::Var(v) if v.sort == Sort::VF => Vf::Var(self.lookup(v)?),
            Term::Lit { value, sort: Sort::VF } => Vf::Const(spec.from_int(*value).repr()),
            Term::Add(a, b) => Vf::Add(Box::new(self.vf(a)?), Box::new(self.vf(b)?)),
            Term::Sub(a, b) => Vf::Sub(Box::new(self.vf(a)?), Box::new(self.vf(b)?)),
            Term::Mul(a, b) => Vf::Mul(Box::new(self.vf(a)?), Box::new(self.vf(b)?)),
            Term::Neg(a) => Vf::Neg(Box::new(self.vf(a)?)),
            Term::Pow(a, e) => Vf::Pow(Box::new(self.vf(a)?), *e),
            Term::App(name, args) => {
                let sym = self
                    .table
                    .get(name)
                    .ok_or_else(|| SortError::new(format!("unknown function symbol {name}"), ""))?;
                if sym.t_precision < spec.precision() {
                    return Err(EvalError::InsufficientTSeriesPrecision {
                        symbol: name.clone(),
                        t_precision: sym.t_precision,
                        precision: spec.precision(),
                    });
                }
                if sym.arity != args.len() {
                    return Err(self.sort_fault("arity mismatch", t));
                }
                let idx = match self.symbols.iter().position(|s| s.name == *name) {
                    Some(i) => i,
                    None => {
                        self.symbols.push(sym.clone());
                        self.symbols.len() - 1
                    }
                };
                let cargs = args.iter().map(|a| self.vf(a)).collect::<Result<_, _>>()?;
                Vf::App(idx, cargs)
            }
            _ => return Err(self.sort_fault("expected a VF term", t)),
        })
    }

    fn rf(&mut self, t: &Term) -> Result<Rf, EvalError> {
        let p = self.spec.p() as i64;
        Ok(match t {
            Term::Var(v) if v.sort == Sort::RF => Rf::Var(self.lookup(v)?),
            Term::Lit { value, sort: Sort::RF } => Rf::Const(value.rem_euclid(p) as u64),
            Term::Add(a, b) => Rf::Add(Box::new(self.rf(a)?), Box::new(self.rf(b)?)),
            Term::Sub(a, b) => Rf::Sub(Box::new(self.rf(a)?), Box::new(self.rf(b)?)),
            Term::Mul(a, b) => Rf::Mul(Box::new(self.rf(a)?), Box::new(self.rf(b)?)),
            Term::Neg(a) => Rf::Neg(Box::new(self.rf(a)?)),
            Term::Pow(a, e) => Rf::Pow(Box::new(self.rf(a)?), *e),
            Term::Ac(a) => Rf::Ac(self.vf(a)?),
            _ => return Err(self.sort_fault("expected an RF term", t)),
        })
    }

    fn vg(&mut self, t: &Term) -> Result<Vg, EvalError> {
        Ok(match t {
            Term::Var(v) if v.sort == Sort::VG => Vg::Var(self.lookup(v)?),
            Term::Lit { value, sort: Sort::VG } => Vg::Const(*value),
            Term::Add(a, b) => Vg::Add(Box::new(self.vg(a)?), Box::new(self.vg(b)?)),
            Term::Sub(a, b) => Vg::Sub(Box::new(self.vg(a)?), Box::new(self.vg(b)?)),
            Term::Neg(a) => Vg::Neg(Box::new(self.vg(a)?)),
            Term::Mul(a, b) => match (&**a, &**b) {
                (Term::Lit { value, .. }, other) | (other, Term::Lit { value, .. }) => {
                    Vg::Scale(*value, Box::new(self.vg(other)?))
                }
                _ => return Err(self.sort_fault("VG product without a literal factor", t)),
            },
            Term::Ord(a) => Vg::Ord(self.vf(a)?),
            _ => return Err(self.sort_fault("expected a VG term", t)),
        })
    }

    fn node(&mut self, f: &Formula) -> Result<Node, EvalError> {
        Ok(match f {
            Formula::Atom(rel, a, b) => match a.sort() {
                Sort::VF if *rel == Rel::Eq => Node::VfEq(self.vf(a)?, self.vf(b)?),
                Sort::RF if *rel == Rel::Eq => Node::RfEq(self.rf(a)?, self.rf(b)?),
                Sort::VG => Node::VgCmp(*rel, self.vg(a)?, self.vg(b)?),
                s => {
                    return Err(EvalError::Sort(SortError::new(
                        format!("`{}` is not defined on {s}", rel.symbol()),
                        "",
                    )))
                }
            },
            Formula::Not(g) => Node::Not(Box::new(self.node(g)?)),
            Formula::And(a, b) => Node::And(Box::new(self.node(a)?), Box::new(self.node(b)?)),
            Formula::Or(a, b) => Node::Or(Box::new(self.node(a)?), Box::new(self.node(b)?)),
            Formula::Implies(a, b) => {
                Node::Implies(Box::new(self.node(a)?), Box::new(self.node(b)?))
            }
            Formula::Exists(v, g) | Formula::Forall(v, g) => {
                if v.sort == Sort::VF {
                    self.has_vf_quantifier = true;
                }
                let slot = self.next_slot;
                self.next_slot += 1;
                self.max_slot = self.max_slot.max(self.next_slot);
                self.scope.push((v.name.clone(), v.sort, slot));
                let body = self.node(g);
                self.scope.pop();
                self.next_slot -= 1;
                Node::Quant {
                    exists: matches!(f, Formula::Exists(..)),
                    sort: v.sort,
                    slot,
                    body: Box::new(body?),
                }
            }
        })
    }
}

impl Compiled {
    /// Compiles `f` with its free variables read from the frame slots given
    /// by `free` (slot `i` holds `free[i]`). Extra entries in `free` are allowed.
    pub fn new(
        f: &Formula,
        symbols: &SymbolTable,
        spec: &FieldSpec,
        free: &[Var],
        vg_bound: u32,
    ) -> Result<Compiled, EvalError> {
        if vg_bound == 0 {
            return Err(EvalError::InvalidBound);
        }
        f.sort_check(symbols)?;
        for v in f.free_vars() {
            if !free.contains(&v) {
                return Err(EvalError::UnboundVariable(v.name));
            }
        }
        let mut c = Compiler {
            table: symbols,
            spec: *spec,
            scope: free.iter().enumerate().map(|(i, v)| (v.name.clone(), v.sort, i)).collect(),
            next_slot: free.len(),
            max_slot: free.len(),
            symbols: Vec::new(),
            has_vf_quantifier: false,
        };
        let root = c.node(f)?;
        if c.has_vf_quantifier {
            check_budget(spec.size() as u128)?;
        }
        Ok(Compiled {
            root,
            spec: *spec,
            bound: vg_bound as i64,
            frame_len: c.max_slot,
            symbols: c.symbols,
        })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    /// A zeroed frame of the right length.
    pub fn frame(&self) -> Vec<i64> {
        vec![0; self.frame_len]
    }

    pub fn eval(&self, frame: &mut [i64]) -> EvalVerdict {
        debug_assert!(frame.len() >= self.frame_len);
        self.node(&self.root, frame)
    }

    fn vf(&self, t: &Vf, fr: &[i64]) -> u64 {
        let s = &self.spec;
        match t {
            Vf::Var(i) => fr[*i] as u64,
            Vf::Const(c) => *c,
            Vf::Add(a, b) => s.add_raw(self.vf(a, fr), self.vf(b, fr)),
            Vf::Sub(a, b) => s.sub_raw(self.vf(a, fr), self.vf(b, fr)),
            Vf::Mul(a, b) => s.mul_raw(self.vf(a, fr), self.vf(b, fr)),
            Vf::Neg(a) => s.neg_raw(self.vf(a, fr)),
            Vf::Pow(a, e) => {
                let base = self.vf(a, fr);
                (0..*e).fold(s.one().repr(), |acc, _| s.mul_raw(acc, base))
            }
            Vf::App(idx, args) => {
                let vals: Vec<u64> = args.iter().map(|a| self.vf(a, fr)).collect();
                self.symbols[*idx].evaluate_raw(s, &vals)
            }
        }
    }

    /// Residue-field value and whether it is determined at this precision.
    fn rf(&self, t: &Rf, fr: &[i64]) -> (u64, bool) {
        let p = self.spec.p();
        let bin = |a: &Rf, b: &Rf, op: &dyn Fn(u64, u64) -> u64| {
            let (x, kx) = self.rf(a, fr);
            let (y, ky) = self.rf(b, fr);
            (op(x, y) % p, kx && ky)
        };
        match t {
            Rf::Var(i) => (fr[*i] as u64, true),
            Rf::Const(c) => (*c, true),
            Rf::Add(a, b) => bin(a, b, &|x, y| x + y),
            Rf::Sub(a, b) => bin(a, b, &|x, y| x + p - y),
            Rf::Mul(a, b) => bin(a, b, &|x, y| x * y),
            Rf::Neg(a) => {
                let (x, k) = self.rf(a, fr);
                ((p - x) % p, k)
            }
            Rf::Pow(a, e) => {
                let (x, k) = self.rf(a, fr);
                ((0..*e).fold(1 % p, |acc, _| acc * x % p), k)
            }
            Rf::Ac(a) => {
                let v = self.vf(a, fr);
                if v == 0 { (0, false) } else { (self.spec.ac_raw(v), true) }
            }
        }
    }

    fn vg(&self, t: &Vg, fr: &[i64]) -> Interval {
        match t {
            Vg::Var(i) => Interval::exact(fr[*i]),
            Vg::Const(c) => Interval::exact(*c),
            Vg::Add(a, b) => {
                let (x, y) = (self.vg(a, fr), self.vg(b, fr));
                Interval {
                    lo: ext_add(x.lo, y.lo),
                    hi: ext_add(x.hi, y.hi),
                    nominal: ext_add(x.nominal, y.nominal),
                }
            }
            Vg::Sub(a, b) => {
                let (x, y) = (self.vg(a, fr), self.vg(b, fr));
                Interval {
                    lo: ext_add(x.lo, -y.hi),
                    hi: ext_add(x.hi, -y.lo),
                    nominal: ext_add(x.nominal, -y.nominal),
                }
            }
            Vg::Neg(a) => {
                let x = self.vg(a, fr);
                Interval { lo: -x.hi, hi: -x.lo, nominal: -x.nominal }
            }
            Vg::Scale(c, a) => {
                let x = self.vg(a, fr);
                let (l, h) = (ext_scale(*c, x.lo), ext_scale(*c, x.hi));
                Interval { lo: l.min(h), hi: l.max(h), nominal: ext_scale(*c, x.nominal) }
            }
            Vg::Ord(a) => match self.spec.ord_raw(self.vf(a, fr)) {
                Some(k) => Interval::exact(k as i64),
                None => Interval { lo: self.spec.precision() as i64, hi: INF, nominal: INF },
            },
        }
    }

    fn compare(rel: Rel, a: Interval, b: Interval) -> EvalVerdict {
        match rel {
            Rel::Eq => {
                if a.is_exact() && b.is_exact() && a.lo == b.lo {
                    EvalVerdict::TRUE
                } else if a.hi < b.lo || b.hi < a.lo {
                    EvalVerdict::FALSE
                } else {
                    EvalVerdict::unknown(a.nominal == b.nominal)
                }
            }
            Rel::Le => {
                if a.hi <= b.lo {
                    EvalVerdict::TRUE
                } else if a.lo > b.hi {
                    EvalVerdict::FALSE
                } else {
                    EvalVerdict::unknown(a.nominal <= b.nominal)
                }
            }
            Rel::Ge => Self::compare(Rel::Le, b, a),
            Rel::Lt => Self::compare(Rel::Le, b, a).not(),
        }
    }

    fn node(&self, n: &Node, fr: &mut [i64]) -> EvalVerdict {
        match n {
            Node::VfEq(a, b) => {
                if self.vf(a, fr) != self.vf(b, fr) {
                    EvalVerdict::FALSE
                } else {
                    EvalVerdict::unknown(true)
                }
            }
            Node::RfEq(a, b) => {
                let ((x, kx), (y, ky)) = (self.rf(a, fr), self.rf(b, fr));
                EvalVerdict { value: x == y, stable: kx && ky }
            }
            Node::VgCmp(rel, a, b) => Self::compare(*rel, self.vg(a, fr), self.vg(b, fr)),
            Node::Not(a) => self.node(a, fr).not(),
            Node::And(a, b) => {
                let x = self.node(a, fr);
                if x.fails() { x } else { x.and(self.node(b, fr)) }
            }
            Node::Or(a, b) => {
                let x = self.node(a, fr);
                if x.holds() { x } else { x.or(self.node(b, fr)) }
            }
            Node::Implies(a, b) => {
                let x = self.node(a, fr).not();
                if x.holds() { x } else { x.or(self.node(b, fr)) }
            }
            Node::Quant { exists, sort, slot, body } => self.quantify(*exists, *sort, *slot, body, fr),
        }
    }

    fn quantify(&self, exists: bool, sort: Sort, slot: usize, body: &Node, fr: &mut [i64]) -> EvalVerdict {
        // Universal quantification is the dual of existential.
        let step = |v: EvalVerdict| if exists { v } else { v.not() };
        let mut acc = EvalVerdict::FALSE;
        let mut visit = |value: i64, force_unstable: bool, fr: &mut [i64]| {
            fr[slot] = value;
            let mut v = step(self.node(body, fr));
            if force_unstable {
                v.stable = false;
            }
            acc = acc.or(v);
            acc.holds()
        };
        match sort {
            Sort::VF => {
                for r in 0..self.spec.size() {
                    if visit(r as i64, false, fr) {
                        break;
                    }
                }
            }
            Sort::RF => {
                for u in 0..self.spec.p() {
                    if visit(u as i64, false, fr) {
                        break;
                    }
                }
            }
            Sort::VG => {
                let b = self.bound;
                let mut done = false;
                for n in (1 - b)..b {
                    if visit(n, false, fr) {
                        done = true;
                        break;
                    }
                }
                if !done && !visit(b, true, fr) && !visit(-b, true, fr) {
                    // Values beyond the bound were not examined.
                    acc = acc.or(EvalVerdict::unknown(false));
                }
            }
        }
        if exists { acc } else { acc.not() }
    }
}
