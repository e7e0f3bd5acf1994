//! Truncated analytic function symbols `F = sum_i a_i(xi) t^i` with
//! `a_i in Z[xi_1, ..., xi_m]`, interpreted with `t` mapped to the uniformizer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::localfield::FieldSpec;

/// One monomial `c * xi^e` of a coefficient polynomial, serialized as `[exponents, c]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial(pub Vec<u32>, pub i64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticSymbol {
    pub name: String,
    pub arity: usize,
    /// Number of `t`-powers retained; the series is known modulo `t^M`.
    pub t_precision: u32,
    /// `coefficients[i]` is the polynomial `a_i`; missing trailing entries are zero.
    pub coefficients: Vec<Vec<Monomial>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolError(pub String);

impl fmt::Display for SymbolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SymbolError {}

impl AnalyticSymbol {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        t_precision: u32,
        coefficients: Vec<Vec<Monomial>>,
    ) -> Result<Self, SymbolError> {
        let sym = AnalyticSymbol { name: name.into(), arity, t_precision, coefficients };
        sym.validate()?;
        Ok(sym)
    }

    pub fn validate(&self) -> Result<(), SymbolError> {
        if !is_identifier(&self.name) {
            return Err(SymbolError(format!("invalid symbol name `{}`", self.name)));
        }
        if self.coefficients.len() > self.t_precision as usize {
            return Err(SymbolError(format!(
                "symbol {}: {} coefficient polynomials exceed t_precision {}",
                self.name,
                self.coefficients.len(),
                self.t_precision
            )));
        }
        for (i, poly) in self.coefficients.iter().enumerate() {
            for Monomial(exps, _) in poly {
                if exps.len() != self.arity {
                    return Err(SymbolError(format!(
                        "symbol {}: monomial in a_{i} has {} exponents, arity is {}",
                        self.name,
                        exps.len(),
                        self.arity
                    )));
                }
            }
        }
        Ok(())
    }

    /// `sum_{i<N} a_i(args) w^i` on canonical representatives. The caller
    /// guarantees `t_precision >= spec.precision()`.
    pub fn evaluate_raw(&self, spec: &FieldSpec, args: &[u64]) -> u64 {
        debug_assert_eq!(args.len(), self.arity);
        let n = spec.precision() as usize;
        let mut total = 0u64;
        let mut w_pow = spec.one().repr();
        let w = spec.uniformizer().repr();
        for poly in self.coefficients.iter().take(n) {
            let mut a = 0u64;
            for Monomial(exps, c) in poly {
                let mut term = spec.from_int(*c).repr();
                for (&x, &e) in args.iter().zip(exps) {
                    for _ in 0..e {
                        term = spec.mul_raw(term, x);
                    }
                }
                a = spec.add_raw(a, term);
            }
            total = spec.add_raw(total, spec.mul_raw(a, w_pow));
            w_pow = spec.mul_raw(w_pow, w);
        }
        total
    }
}

/// Named analytic symbols available to the parser and evaluator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: BTreeMap<String, AnalyticSymbol>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sym: AnalyticSymbol) -> Result<(), SymbolError> {
        sym.validate()?;
        if is_reserved(&sym.name) {
            return Err(SymbolError(format!("symbol name `{}` is reserved", sym.name)));
        }
        self.symbols.insert(sym.name.clone(), sym);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AnalyticSymbol> {
        self.symbols.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnalyticSymbol> {
        self.symbols.values()
    }

    /// Reads a sidecar document: either one symbol object or an array of them.
    pub fn from_json(text: &str) -> Result<Self, SymbolError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SymbolError(format!("symbol JSON: {e}")))?;
        let list: Vec<AnalyticSymbol> = if value.is_array() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(value).map(|s| vec![s])
        }
        .map_err(|e| SymbolError(format!("symbol JSON: {e}")))?;
        let mut table = SymbolTable::new();
        for sym in list {
            table.insert(sym)?;
        }
        Ok(table)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

pub(crate) fn is_reserved(s: &str) -> bool {
    matches!(s, "E" | "A" | "ord" | "ac" | "VF" | "RF" | "VG")
}
