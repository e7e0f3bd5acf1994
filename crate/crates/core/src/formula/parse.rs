//! Tokenizer, recursive-descent parser and sort inference.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! formula := or ('->' formula)?
//! or      := and ('\/' and)*
//! and     := unary ('/\' unary)*
//! unary   := '~' unary | ('E'|'A') IDENT ':' SORT '.' formula | atom | '(' formula ')'
//! atom    := term ('=' | '<=' | '>=' | '<') term
//! term    := product (('+'|'-') product)*
//! product := neg ('*' neg)*
//! neg     := '-' neg | power
//! power   := primary ('^' INT)?
//! primary := INT | IDENT (':' SORT)? | IDENT '(' term (',' term)* ')'
//!          | 'ord' '(' term ')' | 'ac' '(' term ')' | '(' term ')'
//! ```
//!
//! A `-` immediately followed by an integer literal (and not by `^`) is
//! read as a negative literal. Free variables may carry an inline sort
//! annotation at any occurrence; otherwise their sort is inferred.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::symbols::{is_reserved, SymbolTable};
use super::{Formula, FormulaError, Rel, Sort, SortError, Term, Var};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: {message}{}", expected_suffix(expected))]
pub struct ParseError {
    pub position: usize,
    pub message: String,
    pub expected: Vec<String>,
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected one of: {})", expected.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Colon,
    Dot,
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Not,
    Implies,
    Eq,
    Le,
    Ge,
    Lt,
    Plus,
    Minus,
    Star,
    Caret,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Int(n) => return write!(f, "integer {n}"),
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::And => "/\\",
            Tok::Or => "\\/",
            Tok::Not => "~",
            Tok::Implies => "->",
            Tok::Eq => "=",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::Lt => "<",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Caret => "^",
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: String| ParseError { position: pos, message: msg, expected: vec![] };
    while i < bytes.len() {
        let c = text[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        let two = |s: &str| text[i..].starts_with(s);
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < bytes.len()
                && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'\'')
            {
                j += 1;
            }
            let word = text[i..j].to_string();
            i = j;
            Tok::Ident(word)
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let n: i64 = text[i..j]
                .parse()
                .map_err(|_| err(start, format!("integer literal `{}` out of range", &text[i..j])))?;
            i = j;
            Tok::Int(n)
        } else if two("/\\") {
            i += 2;
            Tok::And
        } else if two("\\/") {
            i += 2;
            Tok::Or
        } else if two("->") {
            i += 2;
            Tok::Implies
        } else if two("<=") {
            i += 2;
            Tok::Le
        } else if two(">=") {
            i += 2;
            Tok::Ge
        } else {
            i += c.len_utf8();
            match c {
                ':' => Tok::Colon,
                '.' => Tok::Dot,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '~' => Tok::Not,
                '=' => Tok::Eq,
                '<' => Tok::Lt,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '^' => Tok::Caret,
                other => return Err(err(start, format!("unexpected character `{other}`"))),
            }
        };
        out.push((tok, start));
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

// Untyped syntax tree produced by the parser; sorts are filled in afterwards.

#[derive(Debug, Clone)]
enum RTerm {
    Var { name: String, annot: Option<Sort>, pos: usize },
    Lit { value: i64 },
    Add(Box<RTerm>, Box<RTerm>),
    Sub(Box<RTerm>, Box<RTerm>),
    Mul(Box<RTerm>, Box<RTerm>),
    Neg(Box<RTerm>),
    Pow(Box<RTerm>, u32),
    Ord(Box<RTerm>),
    Ac(Box<RTerm>),
    App { name: String, args: Vec<RTerm>, pos: usize },
}

#[derive(Debug, Clone)]
enum RFormula {
    Atom { rel: Rel, lhs: RTerm, rhs: RTerm, pos: usize },
    Not(Box<RFormula>),
    And(Box<RFormula>, Box<RFormula>),
    Or(Box<RFormula>, Box<RFormula>),
    Implies(Box<RFormula>, Box<RFormula>),
    Quant { exists: bool, var: Var, body: Box<RFormula> },
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
    furthest: Option<ParseError>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&mut self, expected: &[&str]) -> PResult<T> {
        let e = ParseError {
            position: self.offset(),
            message: format!("unexpected {}", self.peek()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        };
        Err(self.record(e))
    }

    /// Keeps the error that got furthest into the input, merging expectations on ties.
    fn record(&mut self, e: ParseError) -> ParseError {
        match &mut self.furthest {
            Some(f) if f.position > e.position => f.clone(),
            Some(f) if f.position == e.position => {
                for x in e.expected {
                    if !f.expected.contains(&x) {
                        f.expected.push(x);
                    }
                }
                f.clone()
            }
            _ => {
                self.furthest = Some(e.clone());
                e
            }
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(&[what])
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth -= 1;
            let e = ParseError {
                position: self.offset(),
                message: format!("nesting deeper than {MAX_DEPTH}"),
                expected: vec![],
            };
            self.furthest = Some(e.clone());
            return Err(e);
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn formula(&mut self) -> PResult<RFormula> {
        self.enter()?;
        let r = self.implies();
        self.leave();
        r
    }

    fn implies(&mut self) -> PResult<RFormula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.formula()?;
            return Ok(RFormula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<RFormula> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = RFormula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<RFormula> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = RFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<RFormula> {
        self.enter()?;
        let r = self.unary_inner();
        self.leave();
        r
    }

    fn unary_inner(&mut self) -> PResult<RFormula> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(RFormula::Not(Box::new(self.unary()?)))
            }
            Tok::Ident(q) if (q == "E" || q == "A") && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                let name = match self.bump() {
                    Tok::Ident(n) => n,
                    _ => unreachable!("checked by peek"),
                };
                if is_reserved(&name) {
                    self.pos -= 1;
                    return self.fail(&["variable name"]);
                }
                self.expect(Tok::Colon, ":")?;
                let sort = self.sort()?;
                self.expect(Tok::Dot, ".")?;
                let body = self.formula()?;
                Ok(RFormula::Quant { exists: q == "E", var: Var::new(name, sort), body: Box::new(body) })
            }
            _ => {
                let save = self.pos;
                match self.atom() {
                    Ok(a) => Ok(a),
                    Err(atom_err) => {
                        self.pos = save;
                        if *self.peek() != Tok::LParen {
                            return Err(atom_err);
                        }
                        self.bump();
                        let inner = match self.formula() {
                            Ok(f) => f,
                            Err(e) => return Err(self.record(e)),
                        };
                        match self.expect(Tok::RParen, ")") {
                            Ok(()) => Ok(inner),
                            Err(e) => Err(self.record(e)),
                        }
                    }
                }
            }
        }
    }

    fn sort(&mut self) -> PResult<Sort> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "VF" || s == "RF" || s == "VG" => {
                self.bump();
                Ok(s.parse().expect("checked"))
            }
            _ => self.fail(&["VF", "RF", "VG"]),
        }
    }

    fn atom(&mut self) -> PResult<RFormula> {
        let pos = self.offset();
        let lhs = self.term()?;
        let rel = match self.peek() {
            Tok::Eq => Rel::Eq,
            Tok::Le => Rel::Le,
            Tok::Ge => Rel::Ge,
            Tok::Lt => Rel::Lt,
            _ => return self.fail(&["=", "<=", ">=", "<", "+", "-", "*"]),
        };
        self.bump();
        let rhs = self.term()?;
        Ok(RFormula::Atom { rel, lhs, rhs, pos })
    }

    fn term(&mut self) -> PResult<RTerm> {
        self.enter()?;
        let r = self.sum();
        self.leave();
        r
    }

    fn sum(&mut self) -> PResult<RTerm> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.product()?;
                    lhs = RTerm::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.product()?;
                    lhs = RTerm::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> PResult<RTerm> {
        let mut lhs = self.neg()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.neg()?;
            lhs = RTerm::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn neg(&mut self) -> PResult<RTerm> {
        self.enter()?;
        let r = self.neg_inner();
        self.leave();
        r
    }

    fn neg_inner(&mut self) -> PResult<RTerm> {
        if *self.peek() != Tok::Minus {
            return self.power();
        }
        self.bump();
        if let Tok::Int(n) = *self.peek() {
            if *self.peek_at(1) != Tok::Caret {
                self.bump();
                return Ok(RTerm::Lit { value: -n });
            }
        }
        Ok(RTerm::Neg(Box::new(self.neg()?)))
    }

    fn power(&mut self) -> PResult<RTerm> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            return match self.bump() {
                Tok::Int(e) if (0..=64).contains(&e) => Ok(RTerm::Pow(Box::new(base), e as u32)),
                _ => {
                    self.pos -= 1;
                    self.fail(&["exponent in 0..=64"])
                }
            };
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<RTerm> {
        let pos = self.offset();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(RTerm::Lit { value: n })
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen, ")")?;
                Ok(t)
            }
            Tok::Ident(name) if name == "ord" || name == "ac" => {
                self.bump();
                self.expect(Tok::LParen, "(")?;
                let t = self.term()?;
                self.expect(Tok::RParen, ")")?;
                Ok(if name == "ord" { RTerm::Ord(Box::new(t)) } else { RTerm::Ac(Box::new(t)) })
            }
            Tok::Ident(name) if !is_reserved(&name) => {
                self.bump();
                match self.peek() {
                    Tok::LParen => {
                        self.bump();
                        let mut args = vec![self.term()?];
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            args.push(self.term()?);
                        }
                        self.expect(Tok::RParen, ")")?;
                        Ok(RTerm::App { name, args, pos })
                    }
                    Tok::Colon => {
                        self.bump();
                        let sort = self.sort()?;
                        Ok(RTerm::Var { name, annot: Some(sort), pos })
                    }
                    _ => Ok(RTerm::Var { name, annot: None, pos }),
                }
            }
            _ => self.fail(&["integer", "variable", "ord", "ac", "("]),
        }
    }
}

// Sort inference: union-find over sort variables.

struct Infer<'a> {
    parent: Vec<usize>,
    sort: Vec<Option<Sort>>,
    free: HashMap<String, (usize, usize)>,
    /// Sort variable of each `Var`/`Lit` node, in traversal order.
    slots: Vec<usize>,
    lits: Vec<usize>,
    symbols: &'a SymbolTable,
}

impl<'a> Infer<'a> {
    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.sort.push(None);
        self.parent.len() - 1
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn unify(&mut self, a: usize, b: usize, pos: usize, what: &str) -> Result<(), SortError> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        match (self.sort[ra], self.sort[rb]) {
            (Some(x), Some(y)) if x != y => Err(SortError::new(
                format!("{what}: {x} vs {y}"),
                format!("byte {pos}"),
            )),
            (sa, sb) => {
                self.parent[ra] = rb;
                self.sort[rb] = sa.or(sb);
                Ok(())
            }
        }
    }

    fn set(&mut self, a: usize, s: Sort, pos: usize, what: &str) -> Result<(), SortError> {
        let r = self.find(a);
        match self.sort[r] {
            Some(x) if x != s => Err(SortError::new(
                format!("{what}: expected {s}, found {x}"),
                format!("byte {pos}"),
            )),
            _ => {
                self.sort[r] = Some(s);
                Ok(())
            }
        }
    }

    fn term(&mut self, t: &RTerm, scope: &[(String, usize)], pos: usize) -> Result<usize, SortError> {
        match t {
            RTerm::Var { name, annot, pos } => {
                let tv = match scope.iter().rev().find(|(n, _)| n == name) {
                    Some((_, tv)) => *tv,
                    None => match self.free.get(name) {
                        Some((tv, _)) => *tv,
                        None => {
                            let tv = self.fresh();
                            self.free.insert(name.clone(), (tv, *pos));
                            tv
                        }
                    },
                };
                if let Some(s) = annot {
                    self.set(tv, *s, *pos, &format!("annotation on {name}"))?;
                }
                self.slots.push(tv);
                Ok(tv)
            }
            RTerm::Lit { .. } => {
                let tv = self.fresh();
                self.slots.push(tv);
                self.lits.push(tv);
                Ok(tv)
            }
            RTerm::Add(a, b) | RTerm::Sub(a, b) | RTerm::Mul(a, b) => {
                let ta = self.term(a, scope, pos)?;
                let tb = self.term(b, scope, pos)?;
                self.unify(ta, tb, pos, "operands of an arithmetic operator differ in sort")?;
                Ok(ta)
            }
            RTerm::Neg(a) | RTerm::Pow(a, _) => self.term(a, scope, pos),
            RTerm::Ord(a) | RTerm::Ac(a) => {
                let ta = self.term(a, scope, pos)?;
                let is_ord = matches!(t, RTerm::Ord(_));
                let name = if is_ord { "ord" } else { "ac" };
                self.set(ta, Sort::VF, pos, &format!("argument of {name}"))?;
                let out = self.fresh();
                self.set(out, if is_ord { Sort::VG } else { Sort::RF }, pos, name)?;
                Ok(out)
            }
            RTerm::App { name, args, pos } => {
                let arity = match self.symbols.get(name) {
                    Some(sym) => sym.arity,
                    None => {
                        return Err(SortError::new(
                            format!("unknown function symbol {name}"),
                            format!("byte {pos}"),
                        ))
                    }
                };
                if arity != args.len() {
                    return Err(SortError::new(
                        format!("{name} has arity {arity} but is applied to {} arguments", args.len()),
                        format!("byte {pos}"),
                    ));
                }
                for a in args {
                    let ta = self.term(a, scope, *pos)?;
                    self.set(ta, Sort::VF, *pos, &format!("argument of {name}"))?;
                }
                let out = self.fresh();
                self.set(out, Sort::VF, *pos, name)?;
                Ok(out)
            }
        }
    }

    fn formula(&mut self, f: &RFormula, scope: &mut Vec<(String, usize)>) -> Result<(), SortError> {
        match f {
            RFormula::Atom { rel, lhs, rhs, pos } => {
                let ta = self.term(lhs, scope, *pos)?;
                let tb = self.term(rhs, scope, *pos)?;
                self.unify(ta, tb, *pos, &format!("sides of `{}` differ in sort", rel.symbol()))?;
                if *rel != Rel::Eq {
                    self.set(ta, Sort::VG, *pos, &format!("`{}` is only defined on VG", rel.symbol()))?;
                }
                Ok(())
            }
            RFormula::Not(g) => self.formula(g, scope),
            RFormula::And(a, b) | RFormula::Or(a, b) | RFormula::Implies(a, b) => {
                self.formula(a, scope)?;
                self.formula(b, scope)
            }
            RFormula::Quant { var, body, .. } => {
                let tv = self.fresh();
                self.sort[tv] = Some(var.sort);
                scope.push((var.name.clone(), tv));
                let r = self.formula(body, scope);
                scope.pop();
                r
            }
        }
    }

    fn resolved(&mut self, tv: usize) -> Option<Sort> {
        let r = self.find(tv);
        self.sort[r]
    }
}

struct Build {
    sorts: std::vec::IntoIter<Sort>,
}

impl Build {
    fn term(&mut self, t: &RTerm) -> Term {
        let b = |s: &mut Self, t: &RTerm| Box::new(s.term(t));
        match t {
            RTerm::Var { name, .. } => {
                Term::Var(Var::new(name.clone(), self.sorts.next().expect("one sort per node")))
            }
            RTerm::Lit { value } => {
                Term::Lit { value: *value, sort: self.sorts.next().expect("one sort per node") }
            }
            RTerm::Add(x, y) => {
                let l = b(self, x);
                Term::Add(l, b(self, y))
            }
            RTerm::Sub(x, y) => {
                let l = b(self, x);
                Term::Sub(l, b(self, y))
            }
            RTerm::Mul(x, y) => {
                let l = b(self, x);
                Term::Mul(l, b(self, y))
            }
            RTerm::Neg(x) => Term::Neg(b(self, x)),
            RTerm::Pow(x, e) => Term::Pow(b(self, x), *e),
            RTerm::Ord(x) => Term::Ord(b(self, x)),
            RTerm::Ac(x) => Term::Ac(b(self, x)),
            RTerm::App { name, args, .. } => {
                Term::App(name.clone(), args.iter().map(|a| self.term(a)).collect())
            }
        }
    }

    fn formula(&mut self, f: &RFormula) -> Formula {
        match f {
            RFormula::Atom { rel, lhs, rhs, .. } => {
                let l = self.term(lhs);
                Formula::Atom(*rel, l, self.term(rhs))
            }
            RFormula::Not(g) => Formula::not(self.formula(g)),
            RFormula::And(a, b) => {
                let l = self.formula(a);
                Formula::and(l, self.formula(b))
            }
            RFormula::Or(a, b) => {
                let l = self.formula(a);
                Formula::or(l, self.formula(b))
            }
            RFormula::Implies(a, b) => {
                let l = self.formula(a);
                Formula::implies(l, self.formula(b))
            }
            RFormula::Quant { exists, var, body } => {
                let inner = self.formula(body);
                if *exists {
                    Formula::exists(var.clone(), inner)
                } else {
                    Formula::forall(var.clone(), inner)
                }
            }
        }
    }
}

/// Parses a formula that uses no analytic symbols.
pub fn parse(text: &str) -> Result<Formula, FormulaError> {
    parse_with(text, &SymbolTable::new())
}

/// Parses and sort-checks a formula against a symbol table.
pub fn parse_with(text: &str, symbols: &SymbolTable) -> Result<Formula, FormulaError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, depth: 0, furthest: None };
    let raw = match p.formula() {
        Ok(f) if *p.peek() == Tok::Eof => f,
        Ok(_) => {
            let e = p.fail::<()>(&["/\\", "\\/", "->", "end of input"]).unwrap_err();
            return Err(e.into());
        }
        Err(e) => return Err(p.furthest.take().unwrap_or(e).into()),
    };

    let mut inf = Infer {
        parent: Vec::new(),
        sort: Vec::new(),
        free: HashMap::new(),
        slots: Vec::new(),
        lits: Vec::new(),
        symbols,
    };
    inf.formula(&raw, &mut Vec::new())?;
    let mut free: Vec<(String, usize, usize)> =
        inf.free.iter().map(|(n, (tv, pos))| (n.clone(), *tv, *pos)).collect();
    free.sort_by_key(|(_, _, pos)| *pos);
    for (name, tv, pos) in free {
        if inf.resolved(tv).is_none() {
            return Err(SortError::new(
                format!("cannot infer the sort of free variable {name}; annotate it, e.g. {name}:VG"),
                format!("byte {pos}"),
            )
            .into());
        }
    }
    for tv in inf.lits.clone() {
        if inf.resolved(tv).is_none() {
            let r = inf.find(tv);
            inf.sort[r] = Some(Sort::VG);
        }
    }
    let slots = inf.slots.clone();
    let sorts: Vec<Sort> = slots
        .into_iter()
        .map(|tv| inf.resolved(tv).expect("every slot resolved"))
        .collect();
    let mut build = Build { sorts: sorts.into_iter() };
    let formula = build.formula(&raw);
    formula.sort_check(symbols)?;
    Ok(formula)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{AnalyticSymbol, Monomial};

    #[test]
    fn parses_quantified_ball_formula() {
        let f = parse("E y:VF. ord(x - y) >= n").unwrap();
        match &f {
            Formula::Exists(v, body) => {
                assert_eq!(*v, Var::vf("y"));
                assert!(matches!(**body, Formula::Atom(Rel::Ge, Term::Ord(_), Term::Var(_))));
            }
            other => panic!("unexpected {other:?}"),
        }
        let fv: Vec<Var> = f.free_vars().into_iter().collect();
        assert_eq!(fv, vec![Var::vg("n"), Var::vf("x")]);
    }

    #[test]
    fn rf_equality_atom() {
        let f = parse("ac(x) = 0").unwrap();
        assert_eq!(
            f,
            Formula::Atom(
                Rel::Eq,
                Term::Ac(Box::new(Term::Var(Var::vf("x")))),
                Term::lit(0, Sort::RF)
            )
        );
    }

    #[test]
    fn ill_sorted_inputs() {
        assert!(matches!(parse("ord(x) + 1 = ac(x)"), Err(FormulaError::Sort(_))));
        assert!(matches!(parse("x:VF = u:RF"), Err(FormulaError::Sort(_))));
        assert!(matches!(parse("ac(x) <= 1"), Err(FormulaError::Sort(_))));
        assert!(matches!(parse("x = y"), Err(FormulaError::Sort(_))));
        assert!(matches!(parse("F(x) = 0"), Err(FormulaError::Sort(_))));
        assert!(matches!(parse("n * m >= 0"), Err(FormulaError::Sort(_))));
        assert!(matches!(parse("ord(x) = n ^ 2"), Err(FormulaError::Sort(_))));
    }

    #[test]
    fn arity_mismatch_is_a_sort_error() {
        let mut t = SymbolTable::new();
        t.insert(AnalyticSymbol::new("F", 2, 2, vec![vec![Monomial(vec![1, 0], 1)]]).unwrap())
            .unwrap();
        let err = parse_with("ord(F(x)) >= 1", &t).unwrap_err();
        assert!(matches!(err, FormulaError::Sort(ref e) if e.message.contains("arity")));
        assert!(parse_with("ord(F(x, y)) >= 1", &t).is_ok());
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = match parse("ord(x) >= ") {
            Err(FormulaError::Parse(e)) => e,
            other => panic!("{other:?}"),
        };
        assert_eq!(e.position, 10);
        assert!(!e.expected.is_empty());
        assert!(matches!(parse("ord(x) > 1"), Err(FormulaError::Parse(_))));
        assert!(matches!(parse("x # y"), Err(FormulaError::Parse(e)) if e.position == 2));
        let deep = "(".repeat(5000) + "x = 0" + &")".repeat(5000);
        assert!(matches!(parse(&deep), Err(FormulaError::Parse(_))));
    }

    #[test]
    fn literal_only_atoms_default_to_vg() {
        let f = parse("1 + 1 = 2").unwrap();
        assert_eq!(f, Formula::atom(
            Rel::Eq,
            Term::Add(Box::new(Term::lit(1, Sort::VG)), Box::new(Term::lit(1, Sort::VG))),
            Term::lit(2, Sort::VG),
        ));
    }

    #[test]
    fn canonical_printing_round_trips() {
        let cases = [
            "E y:VF. ord(x - y) >= n",
            "ord(x*y) >= n /\\ ord(x - y) >= n /\\ ord(y - z) >= n",
            "(E x:VF. ord(x) = n) /\\ n >= 0",
            "~(a:VG = 1 \\/ a < 2) -> (b:VG = a -> b = 3)",
            "A u:RF. E v:RF. u = v^2 \\/ u = 2 * v^2",
            "ord(-x) <= 2 * n - -3",
            "ac(x - (y - z)) = -1",
            "((x:VF = 0))",
            "ord(-(x + y)^2) >= --3",
            "~E v:RF. u:RF = v * v",
            "x:VF * -(0) = x",
            "-(2)^2 = x:VF",
        ];
        for c in cases {
            let f = parse(c).unwrap_or_else(|e| panic!("{c}: {e}"));
            let printed = f.to_canonical();
            let g = parse(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
            assert_eq!(f, g, "{c} -> {printed}");
            assert_eq!(g.to_canonical(), printed);
        }
        assert_eq!(
            parse("E y:VF.ord(x-y)>=n").unwrap().to_canonical(),
            "E y:VF. ord(x:VF - y) >= n:VG"
        );
    }

    #[test]
    fn negative_literals_and_powers() {
        assert_eq!(parse("x:VF = -2^2").unwrap().to_canonical(), "x:VF = -2^2");
        assert_eq!(parse("x:VF = (-2)^2").unwrap().to_canonical(), "x:VF = (-2)^2");
        let f = parse("u:RF = -1").unwrap();
        assert_eq!(f, Formula::atom(Rel::Eq, Term::Var(Var::rf("u")), Term::lit(-1, Sort::RF)));
    }
}
