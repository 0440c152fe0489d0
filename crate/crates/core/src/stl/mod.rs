//! Signal temporal logic over discrete-time vector signals.
//!
//! Formulas are built from affine predicates `a'y + b >= 0`, Boolean
//! connectives and bounded temporal operators. Signals are named per agent;
//! a formula is bound to an ordered agent group and reads slices of the
//! aggregate signal through a [`SignalLayout`].

mod ast;
mod eval;
mod lipschitz;
mod parse;
mod smooth;

pub use ast::{AgentId, Predicate, SignalLayout, StlFormula, Trace, VectorNorm};
pub use eval::{eval_boolean, eval_robustness};
pub use lipschitz::lipschitz_constant;
pub use parse::{parse_formula, Region};
pub use smooth::{smooth_robustness, smoothing_gap};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StlError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown signal name `{0}`")]
    UnknownSignal(String),
    #[error("unknown region name `{0}`")]
    UnknownRegion(String),
    #[error("signal `{signal}` is not part of this formula's agent group")]
    SignalOutsideBinding { signal: String },
    #[error("temporal interval [{a},{b}] is inverted")]
    InvertedInterval { a: usize, b: usize },
    #[error("negative bound in temporal interval at line {line}, column {col}")]
    NegativeInterval { line: usize, col: usize },
    #[error("trace of length {len} too short: needs index {needed} (t={t} + horizon {horizon})")]
    TraceTooShort { len: usize, needed: usize, t: usize, horizon: usize },
    #[error("smoothing temperature must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("predicate has no nonzero coefficient")]
    ZeroPredicate,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
