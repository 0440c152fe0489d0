//! Data-driven uncertainty quantification: conformal quantiles, CVaR,
//! nonconformity scores, the alternating gain/weight training loop and
//! calibrated prediction regions.

mod conformal;
mod cvar;
mod regions;
mod scores;
mod train;

pub use conformal::{conformal_quantile, pac_adjusted_level, pac_confidence};
pub use cvar::{cvar_with_scale, empirical_cvar, empirical_var};
pub use regions::{calibrate_regions, PredictionRegions};
pub use scores::{score_dataset, NonconformityScores, WeightVector};
pub use train::{
    alternating_descent, solve_gain_lp, solve_weight_lp, training_level, IterationObjectives,
    TrainingOptions, TrainingOutcome,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("failure probability must lie in (0,1), got {0}")]
    ThetaOutOfRange(f64),
    #[error("scores are empty")]
    EmptyScores,
    #[error("PAC adjustment {adjustment} is not smaller than theta {theta}")]
    PacAdjustmentTooLarge { theta: f64, adjustment: f64 },
    #[error(
        "conformal quantile is infinite for k1={k1}, theta={theta}; \
         use at least {needed} calibration samples"
    )]
    InfiniteQuantile { k1: usize, theta: f64, needed: usize },
    #[error("weight vector has {got} cliques, expected {expected}")]
    CliqueMismatch { expected: usize, got: usize },
    #[error("invalid weight vector: {0}")]
    WeightsInvalid(String),
    #[error("gain training supports the max-inf trajectory norm only; {0}")]
    NormUnsupported(String),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Mas(#[from] crate::mas::MasError),
}
