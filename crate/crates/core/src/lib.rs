//! Poincaré series of definable equivalence relations over truncated local fields.
//!
//! The crate evaluates three-sorted valued-field formulas over `Z/p^N` and
//! `F_p[t]/t^N`, counts the classes of parametrized equivalence relations,
//! reconstructs the generating function of the class counts, and checks the
//! multibox and class-mass constructions that express those counts as
//! integrals.

pub mod equiv;
pub mod eval;
pub mod formula;
pub mod localfield;
pub mod motivic;
pub mod multibox;
pub mod poly;
pub mod series;

pub use formula::{parse, parse_with, Formula, FormulaError, Sort, SymbolTable, Term, Var};
pub use localfield::{Characteristic, FieldError, FieldSpec, TruncElem, ValuationValue};
