//! Disturbance datasets, train/calibration splits and error-trajectory sets.

mod csvio;
mod dataset;
mod error_set;

pub use csvio::{export_csv, ingest_csv};
pub use dataset::{
    generate_gaussian, generate_gaussian_ar1, DatasetSplit, DisturbanceDataset, Provenance,
    SplitPart,
};
pub use error_set::{build_error_set, ErrorTrajectorySet, TrajectoryNorm};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset invariant violated: {0}")]
    Invalid(String),
    #[error("split needs k1 + 1 < k, got k1={k1}, k={k}")]
    BadSplit { k1: usize, k: usize },
    #[error("csv read error: {0}")]
    Csv(String),
    #[error("ragged sequence for agent {agent}, sample {sample}: missing timestep {t}")]
    Ragged { agent: usize, sample: usize, t: usize },
    #[error("non-numeric cell for agent {agent}, sample {sample}, t={t}, dim {dim}")]
    NonNumeric { agent: usize, sample: usize, t: usize, dim: usize },
    #[error("dataset shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mas(#[from] crate::mas::MasError),
}
