//! Three-sorted first-order formulas over a valued field (VF), its residue
//! field (RF) and its value group (VG), with `ord`, `ac` and truncated
//! analytic function symbols.

mod parse;
mod print;
pub mod symbols;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse, parse_with, ParseError};
pub use symbols::{AnalyticSymbol, Monomial, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sort {
    VF,
    RF,
    VG,
}

impl Sort {
    pub fn as_str(self) -> &'static str {
        match self {
            Sort::VF => "VF",
            Sort::RF => "RF",
            Sort::VG => "VG",
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "VF" => Ok(Sort::VF),
            "RF" => Ok(Sort::RF),
            "VG" => Ok(Sort::VG),
            other => Err(format!("unknown sort `{other}` (expected VF|RF|VG)")),
        }
    }
}

/// A sorted variable. Variables are identified by name; the sort is part
/// of the identity only for the purpose of `free_vars` reporting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub sort: Sort,
}

impl Var {
    pub fn new(name: impl Into<String>, sort: Sort) -> Self {
        Var { name: name.into(), sort }
    }

    pub fn vf(name: impl Into<String>) -> Self {
        Self::new(name, Sort::VF)
    }

    pub fn rf(name: impl Into<String>) -> Self {
        Self::new(name, Sort::RF)
    }

    pub fn vg(name: impl Into<String>) -> Self {
        Self::new(name, Sort::VG)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.sort)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    Lit { value: i64, sort: Sort },
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Power with a literal exponent; sugar for repeated multiplication.
    Pow(Box<Term>, u32),
    Ord(Box<Term>),
    Ac(Box<Term>),
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(v: Var) -> Term {
        Term::Var(v)
    }

    pub fn lit(value: i64, sort: Sort) -> Term {
        Term::Lit { value, sort }
    }

    /// Sort of the term, read off the root (assumes a well-sorted tree).
    pub fn sort(&self) -> Sort {
        match self {
            Term::Var(v) => v.sort,
            Term::Lit { sort, .. } => *sort,
            Term::Add(a, _) | Term::Sub(a, _) | Term::Neg(a) | Term::Pow(a, _) => a.sort(),
            Term::Mul(a, b) => {
                // Scalar multiples in VG may put the literal on either side.
                if matches!(**a, Term::Lit { .. }) { b.sort() } else { a.sort() }
            }
            Term::Ord(_) => Sort::VG,
            Term::Ac(_) => Sort::RF,
            Term::App(..) => Sort::VF,
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Lit { .. } => {}
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::Neg(a) | Term::Pow(a, _) | Term::Ord(a) | Term::Ac(a) => a.collect_vars(out),
            Term::App(_, args) => args.iter().for_each(|t| t.collect_vars(out)),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn replace_var(&self, name: &str, by: &Term) -> Term {
        let r = |t: &Term| Box::new(t.replace_var(name, by));
        match self {
            Term::Var(v) if v.name == name => by.clone(),
            Term::Var(_) | Term::Lit { .. } => self.clone(),
            Term::Add(a, b) => Term::Add(r(a), r(b)),
            Term::Sub(a, b) => Term::Sub(r(a), r(b)),
            Term::Mul(a, b) => Term::Mul(r(a), r(b)),
            Term::Neg(a) => Term::Neg(r(a)),
            Term::Pow(a, e) => Term::Pow(r(a), *e),
            Term::Ord(a) => Term::Ord(r(a)),
            Term::Ac(a) => Term::Ac(r(a)),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|t| t.replace_var(name, by)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rel {
    Eq,
    Le,
    Ge,
    Lt,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Le => "<=",
            Rel::Ge => ">=",
            Rel::Lt => "<",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Rel, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(Var, Box<Formula>),
    Forall(Var, Box<Formula>),
}

impl Formula {
    pub fn atom(rel: Rel, lhs: Term, rhs: Term) -> Formula {
        Formula::Atom(rel, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn exists(v: Var, body: Formula) -> Formula {
        Formula::Exists(v, Box::new(body))
    }

    pub fn forall(v: Var, body: Formula) -> Formula {
        Formula::Forall(v, Box::new(body))
    }

    /// Conjunction of a nonempty list, associated to the left.
    pub fn conj(parts: Vec<Formula>) -> Option<Formula> {
        parts.into_iter().reduce(Formula::and)
    }

    /// Free variables, deterministic (sorted by name, then sort).
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Atom(_, a, b) => {
                for v in a.vars().into_iter().chain(b.vars()) {
                    if !bound.contains(&v.name) {
                        out.insert(v);
                    }
                }
            }
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                bound.push(v.name.clone());
                f.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    fn has_free(&self, name: &str) -> bool {
        self.free_vars().iter().any(|v| v.name == name)
    }

    fn all_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(_, a, b) => {
                out.extend(a.vars().into_iter().chain(b.vars()).map(|v| v.name));
            }
            Formula::Not(f) => f.all_names(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.all_names(out);
                b.all_names(out);
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                out.insert(v.name.clone());
                f.all_names(out);
            }
        }
    }

    /// Capture-avoiding substitution of `by` for the free occurrences of `var`.
    pub fn substitute(&self, var: &Var, by: &Term) -> Result<Formula, SortError> {
        if by.sort() != var.sort {
            return Err(SortError::new(
                format!("cannot substitute a {} term for {}", by.sort(), var),
                "",
            ));
        }
        let by_names: BTreeSet<String> = by.vars().into_iter().map(|v| v.name).collect();
        Ok(self.subst(var, by, &by_names))
    }

    fn subst(&self, var: &Var, by: &Term, by_names: &BTreeSet<String>) -> Formula {
        match self {
            Formula::Atom(r, a, b) => {
                Formula::Atom(*r, a.replace_var(&var.name, by), b.replace_var(&var.name, by))
            }
            Formula::Not(f) => Formula::not(f.subst(var, by, by_names)),
            Formula::And(a, b) => {
                Formula::and(a.subst(var, by, by_names), b.subst(var, by, by_names))
            }
            Formula::Or(a, b) => Formula::or(a.subst(var, by, by_names), b.subst(var, by, by_names)),
            Formula::Implies(a, b) => {
                Formula::implies(a.subst(var, by, by_names), b.subst(var, by, by_names))
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                let rebuild = |v: Var, body: Formula| match self {
                    Formula::Exists(..) => Formula::exists(v, body),
                    _ => Formula::forall(v, body),
                };
                if v.name == var.name || !f.has_free(&var.name) {
                    return self.clone();
                }
                if by_names.contains(&v.name) {
                    let mut used = by_names.clone();
                    f.all_names(&mut used);
                    used.insert(var.name.clone());
                    let fresh = fresh_name(&v.name, &used);
                    let renamed_var = Var::new(fresh.clone(), v.sort);
                    let renamed = f.subst(v, &Term::Var(renamed_var.clone()), &BTreeSet::new());
                    return rebuild(renamed_var, renamed.subst(var, by, by_names));
                }
                rebuild(v.clone(), f.subst(var, by, by_names))
            }
        }
    }

    /// Checks every node against the sort signature.
    pub fn sort_check(&self, symbols: &SymbolTable) -> Result<(), SortError> {
        let mut free: HashMap<String, Sort> = HashMap::new();
        check_formula(self, symbols, &mut Vec::new(), &mut free, "")
    }

    /// Canonical text form; `parse` of this string yields an equal formula.
    pub fn to_canonical(&self) -> String {
        print::print_formula(self)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print_term(self))
    }
}

fn fresh_name(base: &str, used: &BTreeSet<String>) -> String {
    (1..)
        .map(|k| format!("{base}_{k}"))
        .find(|c| !used.contains(c))
        .expect("unbounded search")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sort error{}: {message}", if path.is_empty() { String::new() } else { format!(" at {path}") })]
pub struct SortError {
    pub message: String,
    /// Location of the offending node: an AST path or a byte offset.
    pub path: String,
}

impl SortError {
    pub fn new(message: impl Into<String>, path: impl Into<String>) -> Self {
        SortError { message: message.into(), path: path.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Sort(#[from] SortError),
}

fn lookup(scope: &[(String, Sort)], name: &str) -> Option<Sort> {
    scope.iter().rev().find(|(n, _)| n == name).map(|(_, s)| *s)
}

fn check_term(
    t: &Term,
    symbols: &SymbolTable,
    scope: &[(String, Sort)],
    free: &mut HashMap<String, Sort>,
    path: &str,
) -> Result<Sort, SortError> {
    let sub = |seg: &str| format!("{path}/{seg}");
    match t {
        Term::Var(v) => {
            let expected = match lookup(scope, &v.name) {
                Some(s) => s,
                None => *free.entry(v.name.clone()).or_insert(v.sort),
            };
            if expected != v.sort {
                return Err(SortError::new(
                    format!("variable {} used as {} but declared {}", v.name, v.sort, expected),
                    path,
                ));
            }
            Ok(v.sort)
        }
        Term::Lit { sort, .. } => Ok(*sort),
        Term::Add(a, b) | Term::Sub(a, b) => {
            let sa = check_term(a, symbols, scope, free, &sub("lhs"))?;
            let sb = check_term(b, symbols, scope, free, &sub("rhs"))?;
            if sa != sb {
                return Err(SortError::new(format!("operands of +/- have sorts {sa} and {sb}"), path));
            }
            Ok(sa)
        }
        Term::Mul(a, b) => {
            let sa = check_term(a, symbols, scope, free, &sub("lhs"))?;
            let sb = check_term(b, symbols, scope, free, &sub("rhs"))?;
            if sa != sb {
                return Err(SortError::new(format!("operands of * have sorts {sa} and {sb}"), path));
            }
            let scalar = matches!(**a, Term::Lit { .. }) || matches!(**b, Term::Lit { .. });
            if sa == Sort::VG && !scalar {
                return Err(SortError::new(
                    "VG terms can only be multiplied by an integer literal",
                    path,
                ));
            }
            Ok(sa)
        }
        Term::Neg(a) => check_term(a, symbols, scope, free, &sub("neg")),
        Term::Pow(a, _) => {
            let s = check_term(a, symbols, scope, free, &sub("pow"))?;
            if s == Sort::VG {
                return Err(SortError::new("powers are not defined on VG", path));
            }
            Ok(s)
        }
        Term::Ord(a) | Term::Ac(a) => {
            let name = if matches!(t, Term::Ord(_)) { "ord" } else { "ac" };
            let s = check_term(a, symbols, scope, free, &sub(name))?;
            if s != Sort::VF {
                return Err(SortError::new(format!("{name} expects a VF argument, got {s}"), path));
            }
            Ok(if name == "ord" { Sort::VG } else { Sort::RF })
        }
        Term::App(fname, args) => {
            let sym = symbols
                .get(fname)
                .ok_or_else(|| SortError::new(format!("unknown function symbol {fname}"), path))?;
            if sym.arity != args.len() {
                return Err(SortError::new(
                    format!("{fname} has arity {} but is applied to {} arguments", sym.arity, args.len()),
                    path,
                ));
            }
            for (i, a) in args.iter().enumerate() {
                let s = check_term(a, symbols, scope, free, &sub(&format!("{fname}.{i}")))?;
                if s != Sort::VF {
                    return Err(SortError::new(
                        format!("argument {i} of {fname} must be VF, got {s}"),
                        path,
                    ));
                }
            }
            Ok(Sort::VF)
        }
    }
}

fn check_formula(
    f: &Formula,
    symbols: &SymbolTable,
    scope: &mut Vec<(String, Sort)>,
    free: &mut HashMap<String, Sort>,
    path: &str,
) -> Result<(), SortError> {
    let sub = |seg: &str| format!("{path}/{seg}");
    match f {
        Formula::Atom(rel, a, b) => {
            let sa = check_term(a, symbols, scope, free, &sub("lhs"))?;
            let sb = check_term(b, symbols, scope, free, &sub("rhs"))?;
            if sa != sb {
                return Err(SortError::new(
                    format!("`{}` compares {sa} with {sb}", rel.symbol()),
                    path,
                ));
            }
            if *rel != Rel::Eq && sa != Sort::VG {
                return Err(SortError::new(
                    format!("`{}` is only defined on VG, not {sa}", rel.symbol()),
                    path,
                ));
            }
            Ok(())
        }
        Formula::Not(g) => check_formula(g, symbols, scope, free, &sub("not")),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            check_formula(a, symbols, scope, free, &sub("0"))?;
            check_formula(b, symbols, scope, free, &sub("1"))
        }
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            scope.push((v.name.clone(), v.sort));
            let r = check_formula(g, symbols, scope, free, &sub(&format!("{}", v)));
            scope.pop();
            r
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    #[test]
    fn free_vars_of_ball_formula() {
        let f = p("ord(x - y) >= n");
        let fv: Vec<String> = f.free_vars().iter().map(|v| v.to_string()).collect();
        assert_eq!(fv, vec!["n:VG", "x:VF", "y:VF"]);
    }

    #[test]
    fn substitute_identity_and_shadowing() {
        let f = p("ord(x - y) >= n /\\ E y:VF. ord(y) >= n");
        let y = Var::vf("y");
        assert_eq!(f.substitute(&y, &Term::Var(y.clone())).unwrap(), f);
        let g = f.substitute(&y, &Term::Var(Var::vf("z"))).unwrap();
        assert_eq!(g, p("ord(x - z) >= n /\\ E y:VF. ord(y) >= n"));
    }

    #[test]
    fn substitute_avoids_capture() {
        let f = p("E y:VF. ord(x - y) >= 1");
        let g = f.substitute(&Var::vf("x"), &Term::Var(Var::vf("y"))).unwrap();
        let fv: BTreeSet<Var> = g.free_vars();
        assert_eq!(fv, [Var::vf("y")].into_iter().collect());
        assert_eq!(g.to_canonical(), "E y_1:VF. ord(y:VF - y_1) >= 1");
    }

    #[test]
    fn substitute_rejects_sort_mismatch() {
        let f = p("ord(x) >= 1");
        assert!(f.substitute(&Var::vf("x"), &Term::lit(1, Sort::VG)).is_err());
    }

    #[test]
    fn sort_check_signatures() {
        let ok = Formula::atom(
            Rel::Le,
            Term::Ord(Box::new(Term::Var(Var::vf("x")))),
            Term::Var(Var::vg("n")),
        );
        assert!(ok.sort_check(&SymbolTable::new()).is_ok());
        let bad = Formula::atom(Rel::Eq, Term::Var(Var::vf("x")), Term::Var(Var::rf("u")));
        assert!(bad.sort_check(&SymbolTable::new()).is_err());
        let mut symbols = SymbolTable::new();
        symbols.insert(AnalyticSymbol::new("F", 2, 1, vec![]).unwrap()).unwrap();
        let app = Formula::atom(
            Rel::Eq,
            Term::App("F".into(), vec![Term::Var(Var::vf("x"))]),
            Term::lit(0, Sort::VF),
        );
        let err = app.sort_check(&symbols).unwrap_err();
        assert!(err.message.contains("arity"));
        let clash = Formula::and(
            Formula::atom(Rel::Eq, Term::Var(Var::vf("x")), Term::lit(0, Sort::VF)),
            Formula::atom(Rel::Eq, Term::Var(Var::rf("x")), Term::lit(0, Sort::RF)),
        );
        assert!(clash.sort_check(&SymbolTable::new()).is_err());
    }
}
