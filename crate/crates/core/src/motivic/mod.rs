//! Motivic coefficients, their specializations, and Haar integration of the
//! resulting step functions over truncated domains.

use thiserror::Error;

use crate::equiv::EquivError;
use crate::eval::EvalError;
use crate::localfield::FieldError;
use crate::multibox::MultiboxError;

pub mod classmass;
pub mod commute;
pub mod integrate;
pub mod scalar;

pub use classmass::{
    class_mass, class_mass_check, count_via_integral, ClassMass, ClassMassReport, CountViaIntegral, MassCase,
};
pub use integrate::{
    haar_integrate, haar_integrate_with, presburger_sum, Axis, FnExpr, PresburgerSum, SpecializedFn, Tail,
};
pub use scalar::{nonneg_on_ray, MotivicScalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MotivicError {
    #[error("non-admissible denominator: {0}")]
    NonAdmissibleDenominator(String),
    #[error("integrand is not constant on the box of {point}")]
    NotStepConstant { point: String },
    #[error("declared tail ratio {ratio} does not have absolute value below 1")]
    DivergentFamily { ratio: String },
    #[error("family violates its declared tail at index {index}")]
    TailViolation { index: String },
    #[error("reciprocal of an empty fiber at {point}")]
    EmptyFiber { point: String },
    #[error("negative integrand value at {point}")]
    NegativeValue { point: String },
    #[error("condition is undecided at {point}")]
    Undecided { point: String },
    #[error("precision inconclusive: {0}")]
    PrecisionInconclusive(String),
    #[error("class {class} has an exponent that stays at the precision limit on some coordinates only")]
    UnboundedExponent { class: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Equiv(#[from] EquivError),
    #[error(transparent)]
    Multibox(#[from] MultiboxError),
}
