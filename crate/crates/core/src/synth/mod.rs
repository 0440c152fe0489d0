//! Tightened-robustness STL synthesis.
//!
//! The chance constraint is replaced by deterministic robustness constraints
//! on the nominal trajectories, tightened per clique by the Lipschitz
//! constant times the calibrated prediction-region radius. Subproblems are
//! solved by smoothed-robustness gradient optimization with temperature
//! annealing and quadratic penalties; reported robustness is always
//! re-evaluated with exact semantics.

mod lbfgs;
mod plan;
mod problem;
mod tighten;

pub use lbfgs::{minimize, OptimOptions};
pub use plan::{
    initial_plan, solve_centralized, step_plan, CliqueConstraint, CliqueRole, StepInputs,
    SynthDiagnostics, SynthOptions, SynthesisResult,
};
pub use problem::AgentCost;
pub use tighten::{tighten, TightenedClique, TightenedSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("clique {clique} has a non-finite prediction-region radius; cannot tighten")]
    NonFiniteRadius { clique: usize },
    #[error("improvement weight must be positive, got {0}")]
    OmegaNonPositive(f64),
    #[error("norm mismatch between Lipschitz constants and prediction regions")]
    NormMismatch,
    #[error(transparent)]
    Stl(#[from] crate::stl::StlError),
    #[error(transparent)]
    Mas(#[from] crate::mas::MasError),
}
