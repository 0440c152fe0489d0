//! On-disk artifact schemas: trained gains, calibrated regions, trace files
//! and verification reports. All JSON, stable field order, reproducible
//! bytes for identical inputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Provenance, TrajectoryNorm};
use crate::mas::{AgentGains, FeedbackGains, MasError};
use crate::uq::IterationObjectives;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().copied())
    }
}

/// Trained gains and weights, with the objective trace for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsArtifact {
    pub schema: String,
    pub scenario: String,
    pub horizon: usize,
    pub norm: TrajectoryNorm,
    pub theta: f64,
    pub theta_hat: f64,
    pub theta_hat_clamped: bool,
    pub q_scale: f64,
    pub weights: Vec<f64>,
    pub clique_members: Vec<Vec<usize>>,
    /// Per agent: stacked gain matrix and its block dimensions.
    pub gains: Vec<MatrixData>,
    pub input_dims: Vec<usize>,
    pub state_dims: Vec<usize>,
    pub objective_trace: Vec<IterationObjectives>,
    pub dataset_provenance: Provenance,
}

pub const GAINS_SCHEMA: &str = "stlmas/gains/v1";
pub const REGIONS_SCHEMA: &str = "stlmas/regions/v1";

impl GainsArtifact {
    pub fn to_gains(&self) -> Result<FeedbackGains, MasError> {
        let agents = self
            .gains
            .iter()
            .enumerate()
            .map(|(i, m)| {
                AgentGains::from_matrix(
                    m.to_matrix(),
                    self.horizon,
                    self.input_dims[i],
                    self.state_dims[i],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeedbackGains { agents })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacInfo {
    pub beta: f64,
    pub adjusted_level: f64,
    /// Confidence `1 - beta` implied by the adjustment formula.
    pub confidence: f64,
}

/// Calibrated prediction regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionsArtifact {
    pub schema: String,
    pub scenario: String,
    pub theta: f64,
    pub theta_hat: f64,
    pub quantile: f64,
    pub radii: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub norm: TrajectoryNorm,
    pub calibration_count: usize,
    pub pac: Option<PacInfo>,
    pub objective_trace: Vec<IterationObjectives>,
}

/// One line of a trace file (JSON lines).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header {
        scenario: String,
        horizon: usize,
        seed: u64,
    },
    Step {
        t: usize,
        x: Vec<Vec<f64>>,
        u: Vec<Vec<f64>>,
        selected: Vec<usize>,
        clique_robustness: Vec<f64>,
    },
    Summary {
        verdict: bool,
        robustness: f64,
        per_clique_robustness: Vec<f64>,
        flagged: bool,
        selection_counts: Vec<usize>,
    },
}

/// Verification summary combining the Monte-Carlo satisfaction run, the
/// coverage experiment and the union-bound comparison.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyArtifact {
    pub scenario: String,
    pub runs: usize,
    pub satisfied: usize,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub target_rate: f64,
    pub meets_target: bool,
    pub containment_rate: f64,
    pub flagged_runs: usize,
    pub selection_counts: Vec<usize>,
    pub coverage_indicator_rate: f64,
    pub coverage_mean: f64,
    pub coverage_variance: f64,
    pub coverage_beta_mean: f64,
    pub coverage_beta_variance: f64,
    /// Largest per-agent prediction-region radius (singleton cliques).
    pub cp_max_agent_radius: f64,
    pub union_radius_conservative: f64,
    pub union_radius_exact: f64,
    pub union_target: f64,
    pub cp_beats_union: bool,
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable artifact");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let data = MatrixData::from_matrix(&m);
        assert_eq!(data.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(data.to_matrix(), m);
    }

    #[test]
    fn artifact_bytes_stable_through_reload() {
        let artifact = GainsArtifact {
            schema: GAINS_SCHEMA.into(),
            scenario: "mini".into(),
            horizon: 2,
            norm: TrajectoryNorm::MaxInf,
            theta: 0.05,
            theta_hat: 0.9595,
            theta_hat_clamped: false,
            q_scale: 3.9,
            weights: vec![1.0],
            clique_members: vec![vec![0]],
            gains: vec![MatrixData { rows: 2, cols: 2, data: vec![0.0, 0.0, -0.5, 0.0] }],
            input_dims: vec![1],
            state_dims: vec![1],
            objective_trace: vec![],
            dataset_provenance: Provenance::Generated { seed: 1, kind: "gaussian-iid".into() },
        };
        let first = to_json_pretty(&artifact);
        let reloaded: GainsArtifact = serde_json::from_str(&first).unwrap();
        let second = to_json_pretty(&reloaded);
        assert_eq!(first, second);
        assert_eq!(reloaded, artifact);
    }
}
