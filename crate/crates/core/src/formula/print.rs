//! Canonical printer. Bound variables are annotated at their binder, free
//! variables at their first occurrence, and parentheses are emitted only
//! where the grammar needs them.

use std::collections::HashSet;

use super::{Formula, Term};

struct Printer {
    annotated: HashSet<String>,
    bound: Vec<String>,
}

impl Printer {
    fn var(&mut self, name: &str, sort: super::Sort) -> String {
        if self.bound.iter().any(|b| b == name) || !self.annotated.insert(name.to_string()) {
            name.to_string()
        } else {
            format!("{name}:{sort}")
        }
    }

    /// Returns the text and its binding strength (higher binds tighter).
    fn term(&mut self, t: &Term) -> (String, u8) {
        match t {
            Term::Var(v) => (self.var(&v.name, v.sort), 5),
            Term::Lit { value, .. } => (value.to_string(), if *value < 0 { 3 } else { 5 }),
            Term::Add(a, b) | Term::Sub(a, b) => {
                let op = if matches!(t, Term::Add(..)) { "+" } else { "-" };
                let l = self.child(a, 1);
                let r = self.child(b, 2);
                (format!("{l} {op} {r}"), 1)
            }
            Term::Mul(a, b) => {
                let l = self.child(a, 2);
                let r = self.child(b, 3);
                (format!("{l} * {r}"), 2)
            }
            Term::Neg(a) => {
                let inner = self.child(a, 3);
                // `-3` would lex as a negative literal.
                if inner.chars().all(|c| c.is_ascii_digit()) {
                    (format!("-({inner})"), 3)
                } else {
                    (format!("-{inner}"), 3)
                }
            }
            Term::Pow(a, e) => {
                let base = self.child(a, 5);
                (format!("{base}^{e}"), 4)
            }
            Term::Ord(a) => {
                let (s, _) = self.term(a);
                (format!("ord({s})"), 5)
            }
            Term::Ac(a) => {
                let (s, _) = self.term(a);
                (format!("ac({s})"), 5)
            }
            Term::App(f, args) => {
                let parts: Vec<String> = args.iter().map(|a| self.term(a).0).collect();
                (format!("{f}({})", parts.join(", ")), 5)
            }
        }
    }

    fn child(&mut self, t: &Term, min: u8) -> String {
        let (s, prec) = self.term(t);
        if prec < min { format!("({s})") } else { s }
    }

    /// Returns the text, its precedence, and whether it ends in a quantifier
    /// body that would swallow anything appended to its right.
    fn formula(&mut self, f: &Formula) -> (String, u8, bool) {
        match f {
            Formula::Atom(rel, a, b) => {
                let (l, _) = self.term(a);
                let (r, _) = self.term(b);
                (format!("{l} {} {r}", rel.symbol()), 4, false)
            }
            Formula::Not(g) => {
                let (s, prec, open) = self.formula(g);
                if prec < 4 {
                    (format!("~({s})"), 4, false)
                } else {
                    (format!("~{s}"), 4, open)
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                let (op, prec) = match f {
                    Formula::And(..) => ("/\\", 3),
                    Formula::Or(..) => ("\\/", 2),
                    _ => ("->", 1),
                };
                let right_assoc = prec == 1;
                let (ls, lp, lopen) = self.formula(a);
                let l = if lp < prec || (lp == prec && right_assoc) || lopen {
                    format!("({ls})")
                } else {
                    ls
                };
                let (rs, rp, ropen) = self.formula(b);
                let (r, open) = if rp < prec || (rp == prec && !right_assoc) {
                    (format!("({rs})"), false)
                } else {
                    (rs, ropen)
                };
                (format!("{l} {op} {r}"), prec, open)
            }
            Formula::Exists(v, g) | Formula::Forall(v, g) => {
                let q = if matches!(f, Formula::Exists(..)) { "E" } else { "A" };
                self.bound.push(v.name.clone());
                let (body, _, _) = self.formula(g);
                self.bound.pop();
                (format!("{q} {}:{}. {body}", v.name, v.sort), 4, true)
            }
        }
    }
}

pub(crate) fn print_formula(f: &Formula) -> String {
    let mut p = Printer { annotated: HashSet::new(), bound: Vec::new() };
    p.formula(f).0
}

pub(crate) fn print_term(t: &Term) -> String {
    let mut p = Printer { annotated: HashSet::new(), bound: Vec::new() };
    p.term(t).0
}
