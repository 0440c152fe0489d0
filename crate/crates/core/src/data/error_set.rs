use super::dataset::{DatasetSplit, DisturbanceDataset, SplitPart};
use super::DataError;
use crate::mas::{build_stacked, error_trajectory, CliqueSpec, FeedbackGains, MasSystem};

/// Trajectory norm applied to error trajectories throughout the pipeline.
///
/// `MaxInf` is `max_t ||e(t)||_inf` (the default; keeps all training
/// programs linear); `MaxL2` is `max_t ||e(t)||_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TrajectoryNorm {
    MaxInf,
    MaxL2,
}

impl TrajectoryNorm {
    pub fn of(self, traj: &[nalgebra::DVector<f64>]) -> f64 {
        match self {
            TrajectoryNorm::MaxInf => traj.iter().map(|v| v.amax()).fold(0.0, f64::max),
            TrajectoryNorm::MaxL2 => traj.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }
}

/// Per-clique error trajectory norms for one split part.
///
/// `clique_norms[clique][j]` is `||e_clique^{(s_j)}(1:N)||` where `s_j` is
/// the j-th sample index of the part.
#[derive(Debug, Clone)]
pub struct ErrorTrajectorySet {
    pub clique_norms: Vec<Vec<f64>>,
    pub sample_indices: Vec<usize>,
    pub norm: TrajectoryNorm,
}

impl ErrorTrajectorySet {
    pub fn num_cliques(&self) -> usize {
        self.clique_norms.len()
    }

    pub fn num_samples(&self) -> usize {
        self.sample_indices.len()
    }
}

/// Propagates the chosen split's disturbance samples through the error
/// dynamics under `gains` and records per-clique trajectory norms.
pub fn build_error_set(
    system: &MasSystem,
    ds: &DisturbanceDataset,
    split: &DatasetSplit,
    part: SplitPart,
    gains: &FeedbackGains,
    cliques: &[CliqueSpec],
    norm: TrajectoryNorm,
) -> Result<ErrorTrajectorySet, DataError> {
    if ds.num_agents() != system.num_agents() {
        return Err(DataError::ShapeMismatch(format!(
            "dataset has {} agents, system has {}",
            ds.num_agents(),
            system.num_agents()
        )));
    }
    let n = ds.horizon;
    let ops: Vec<_> = system.agents.iter().map(|a| build_stacked(a, n)).collect();
    let indices = split.indices(part);
    // per-agent trajectory norms once, then combine per clique
    let mut agent_norms = vec![vec![0.0; indices.len()]; system.num_agents()];
    let mut agent_step_norms: Vec<Vec<Vec<f64>>> = Vec::new(); // [agent][j][t] used for L2
    for (ai, (agent_ops, agent_gains)) in ops.iter().zip(&gains.agents).enumerate() {
        let mut per_step = Vec::with_capacity(indices.len());
        for (j, &s) in indices.iter().enumerate() {
            let e = error_trajectory(agent_ops, agent_gains, ds.sample(ai, s))?;
            agent_norms[ai][j] = norm.of(&e);
            if norm == TrajectoryNorm::MaxL2 {
                per_step.push(e.iter().map(|v| v.norm_squared()).collect());
            } else {
                per_step.push(Vec::new());
            }
        }
        agent_step_norms.push(per_step);
    }
    let clique_norms = cliques
        .iter()
        .map(|clique| {
            indices
                .iter()
                .enumerate()
                .map(|(j, _)| match norm {
                    // the inf-norm of a concatenation is the max over parts
                    TrajectoryNorm::MaxInf => clique
                        .members
                        .iter()
                        .map(|&m| agent_norms[m][j])
                        .fold(0.0, f64::max),
                    TrajectoryNorm::MaxL2 => (0..n)
                        .map(|t| {
                            clique
                                .members
                                .iter()
                                .map(|&m| agent_step_norms[m][j][t])
                                .sum::<f64>()
                        })
                        .fold(0.0, f64::max)
                        .sqrt(),
                })
                .collect()
        })
        .collect();
    Ok(ErrorTrajectorySet { clique_norms, sample_indices: indices, norm })
}
