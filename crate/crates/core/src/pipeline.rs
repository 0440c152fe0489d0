//! End-to-end orchestration used by the command-line tool and the
//! integration tests: dataset generation, training, calibration, closed-loop
//! runs and verification, with artifact (de)serialization.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::config::{ConfigError, Scenario};
use crate::data::{
    generate_gaussian_ar1, DataError, DatasetSplit, DisturbanceDataset, SplitPart,
};
use crate::lp::LpError;
use crate::mas::{FeedbackGains, MasError};
use crate::report::{
    GainsArtifact, MatrixData, PacInfo, RegionsArtifact, TraceLine, VerifyArtifact, GAINS_SCHEMA,
    REGIONS_SCHEMA,
};
use crate::runtime::{run_closed_loop, ClosedLoopTrace, ExecutionMode, RuntimeError, RuntimeOptions};
use crate::stl::StlError;
use crate::synth::{
    initial_plan, solve_centralized, tighten, CliqueConstraint, CliqueRole, SynthError,
    TightenedSpec,
};
use crate::uq::{
    alternating_descent, calibrate_regions, pac_adjusted_level, pac_confidence, score_dataset,
    PredictionRegions, TrainingOptions, UqError, WeightVector,
};
use crate::verify::{
    coverage_experiment_uniform, monte_carlo_satisfaction, union_bound_radius, McInputs, McReport,
    McRun, TailBound, VerifyError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Mas(#[from] MasError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("synthesis infeasible for agent {agent}: violations {violations:?}")]
    InfeasiblePlan { agent: usize, violations: Vec<(usize, f64)> },
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 2 infeasible, 3 bad input, 4 internal solver
    /// failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Data(_) | PipelineError::Stl(_) => 3,
            PipelineError::Uq(UqError::InfiniteQuantile { .. }) => 3,
            PipelineError::Uq(UqError::Lp(LpError::NoConvergence { .. }))
            | PipelineError::Uq(UqError::Lp(LpError::Numerical(_))) => 4,
            PipelineError::Uq(_) | PipelineError::Mas(_) => 3,
            PipelineError::InfeasiblePlan { .. } => 2,
            PipelineError::Synth(SynthError::NonFiniteRadius { .. }) => 2,
            PipelineError::Synth(_) => 2,
            PipelineError::Runtime(_) | PipelineError::Verify(_) => 4,
            PipelineError::Artifact(_) => 3,
            PipelineError::Io(_) => 3,
        }
    }
}

pub fn generate_dataset(sc: &Scenario) -> DisturbanceDataset {
    let dims: Vec<usize> = sc.system.agents.iter().map(|a| a.state_dim()).collect();
    generate_gaussian_ar1(
        &dims,
        sc.horizon,
        sc.dataset.sigma2,
        sc.dataset.ar1,
        sc.dataset.samples,
        sc.dataset.seed,
    )
}

pub fn dataset_split(sc: &Scenario) -> Result<DatasetSplit, PipelineError> {
    Ok(DatasetSplit::new(sc.dataset.calibration, sc.dataset.samples)?)
}

/// Alternating gain/weight training on the training split.
pub fn train(sc: &Scenario, ds: &DisturbanceDataset) -> Result<GainsArtifact, PipelineError> {
    let split = dataset_split(sc)?;
    let opts = TrainingOptions {
        tau_max: sc.training.tau_max,
        theta: sc.theta,
        norm: sc.norm,
        gain_shrinkage: sc.training.gain_shrinkage,
        ..Default::default()
    };
    let outcome = alternating_descent(
        &sc.system,
        sc.horizon,
        ds,
        &split,
        &sc.cliques,
        &sc.graph,
        &opts,
    )?;
    Ok(GainsArtifact {
        schema: GAINS_SCHEMA.into(),
        scenario: sc.name.clone(),
        horizon: sc.horizon,
        norm: sc.norm,
        theta: sc.theta,
        theta_hat: outcome.theta_hat,
        theta_hat_clamped: outcome.theta_hat_clamped,
        q_scale: outcome.q_scale,
        weights: outcome.weights.values.clone(),
        clique_members: sc.cliques.iter().map(|c| c.members.clone()).collect(),
        gains: outcome.gains.agents.iter().map(|g| MatrixData::from_matrix(g.matrix())).collect(),
        input_dims: sc.system.agents.iter().map(|a| a.input_dim()).collect(),
        state_dims: sc.system.agents.iter().map(|a| a.state_dim()).collect(),
        objective_trace: outcome.objective_trace,
        dataset_provenance: ds.provenance.clone(),
    })
}

/// Conformal calibration of the prediction regions on the calibration split.
pub fn calibrate(
    sc: &Scenario,
    ds: &DisturbanceDataset,
    gains_artifact: &GainsArtifact,
    pac_beta: Option<f64>,
) -> Result<RegionsArtifact, PipelineError> {
    let split = dataset_split(sc)?;
    let gains = gains_artifact.to_gains()?;
    let weights = WeightVector::new(gains_artifact.weights.clone())?;
    let errors = crate::data::build_error_set(
        &sc.system,
        ds,
        &split,
        SplitPart::Calibration,
        &gains,
        &sc.cliques,
        sc.norm,
    )?;
    let scores = score_dataset(&errors, &weights)?;
    let (level, pac) = match pac_beta {
        Some(beta) => {
            let adjusted = pac_adjusted_level(sc.theta, beta, split.k1)?;
            let confidence = pac_confidence(sc.theta, adjusted, split.k1);
            (adjusted, Some(PacInfo { beta, adjusted_level: adjusted, confidence }))
        }
        None => (sc.theta, None),
    };
    let regions = calibrate_regions(&scores, &weights, level, sc.norm)?;
    Ok(RegionsArtifact {
        schema: REGIONS_SCHEMA.into(),
        scenario: sc.name.clone(),
        theta: sc.theta,
        theta_hat: gains_artifact.theta_hat,
        quantile: regions.quantile,
        radii: regions.radii,
        degenerate: regions.degenerate,
        norm: sc.norm,
        calibration_count: split.k1,
        pac,
        objective_trace: gains_artifact.objective_trace.clone(),
    })
}

pub fn regions_from_artifact(artifact: &RegionsArtifact) -> PredictionRegions {
    PredictionRegions {
        theta: artifact.theta,
        quantile: artifact.quantile,
        radii: artifact.radii.clone(),
        degenerate: artifact.degenerate.clone(),
        norm: artifact.norm,
    }
}

pub fn tightened_spec(
    sc: &Scenario,
    regions: &RegionsArtifact,
) -> Result<TightenedSpec, PipelineError> {
    Ok(tighten(&sc.cliques, &regions_from_artifact(regions))?)
}

/// Time-zero plans for every agent under their individual tasks only.
pub fn initial_plans(
    sc: &Scenario,
    tightened: &TightenedSpec,
) -> Result<(Vec<Vec<DVector<f64>>>, Vec<Vec<DVector<f64>>>), PipelineError> {
    let opts = sc.synth_options();
    let mut inputs = Vec::with_capacity(sc.system.num_agents());
    let mut states = Vec::with_capacity(sc.system.num_agents());
    for agent in 0..sc.system.num_agents() {
        let constraints: Vec<CliqueConstraint> = sc
            .graph
            .memberships[agent]
            .iter()
            .filter(|&&ci| !sc.cliques[ci].is_collaborative())
            .map(|&ci| CliqueConstraint {
                members: sc.cliques[ci].members.clone(),
                formula: sc.cliques[ci].formula.clone(),
                margin: tightened.margin(ci),
                bound: 0.0,
                role: CliqueRole::Individual,
            })
            .collect();
        let result =
            initial_plan(&sc.system, agent, constraints, &sc.costs[agent], sc.horizon, &opts)?;
        if !result.feasible {
            return Err(PipelineError::InfeasiblePlan { agent, violations: result.violations });
        }
        inputs.push(result.inputs[0].clone());
        states.push(result.states[0].clone());
    }
    Ok((inputs, states))
}

/// Centralized plan enforcing every clique, for open-loop execution.
pub fn centralized_plan(
    sc: &Scenario,
    tightened: &TightenedSpec,
) -> Result<(Vec<Vec<DVector<f64>>>, Vec<Vec<DVector<f64>>>), PipelineError> {
    let constraints: Vec<CliqueConstraint> = sc
        .cliques
        .iter()
        .enumerate()
        .map(|(ci, c)| CliqueConstraint {
            members: c.members.clone(),
            formula: c.formula.clone(),
            margin: tightened.margin(ci),
            bound: 0.0,
            role: CliqueRole::Individual,
        })
        .collect();
    let result =
        solve_centralized(&sc.system, constraints, &sc.costs, sc.horizon, &sc.synth_options())?;
    if !result.feasible {
        return Err(PipelineError::InfeasiblePlan { agent: usize::MAX, violations: result.violations });
    }
    Ok((result.inputs, result.states))
}

pub fn runtime_options(sc: &Scenario, mode: ExecutionMode) -> RuntimeOptions {
    RuntimeOptions { omega: sc.omega(), mode, synth: sc.step_synth_options() }
}

/// One closed-loop episode over the given realization.
#[allow(clippy::too_many_arguments)]
pub fn run_one(
    sc: &Scenario,
    gains: &FeedbackGains,
    tightened: &TightenedSpec,
    initial_inputs: &[Vec<DVector<f64>>],
    initial_states: &[Vec<DVector<f64>>],
    realization: &[Vec<DVector<f64>>],
    mode: ExecutionMode,
) -> Result<ClosedLoopTrace, PipelineError> {
    let margins: Vec<f64> = tightened.entries.iter().map(|e| e.margin).collect();
    Ok(run_closed_loop(
        &sc.system,
        &sc.cliques,
        &sc.graph,
        &margins,
        gains,
        &sc.costs,
        initial_inputs,
        initial_states,
        realization,
        sc.horizon,
        &runtime_options(sc, mode),
    )?)
}

/// Draws a fresh disturbance realization from a seed.
pub fn realization_from_seed(sc: &Scenario, seed: u64) -> Vec<Vec<DVector<f64>>> {
    let dims: Vec<usize> = sc.system.agents.iter().map(|a| a.state_dim()).collect();
    let ds =
        generate_gaussian_ar1(&dims, sc.horizon, sc.dataset.sigma2, sc.dataset.ar1, 1, seed);
    (0..dims.len()).map(|i| ds.sample(i, 0).to_vec()).collect()
}

/// The reserved test sample (index 0) of a dataset as a realization.
pub fn realization_from_dataset(ds: &DisturbanceDataset) -> Vec<Vec<DVector<f64>>> {
    (0..ds.num_agents()).map(|i| ds.sample(i, 0).to_vec()).collect()
}

pub struct VerifyOutput {
    pub artifact: VerifyArtifact,
    pub mc: McReport,
    pub runs: Vec<McRun>,
}

/// Monte-Carlo verification plus the coverage experiment and union-bound
/// comparison.
pub fn verify(
    sc: &Scenario,
    gains_artifact: &GainsArtifact,
    regions: &RegionsArtifact,
    n_runs: usize,
    mode: ExecutionMode,
) -> Result<VerifyOutput, PipelineError> {
    let gains = gains_artifact.to_gains()?;
    let weights = WeightVector::new(gains_artifact.weights.clone())?;
    let tightened = tightened_spec(sc, regions)?;
    let margins: Vec<f64> = tightened.entries.iter().map(|e| e.margin).collect();
    let (initial_inputs, initial_states) = match mode {
        ExecutionMode::Distributed => initial_plans(sc, &tightened)?,
        ExecutionMode::OpenLoop => centralized_plan(sc, &tightened)?,
    };
    let inputs = McInputs {
        system: &sc.system,
        cliques: &sc.cliques,
        graph: &sc.graph,
        margins: &margins,
        gains: &gains,
        weights: &weights,
        quantile: regions.quantile,
        costs: &sc.costs,
        initial_inputs: &initial_inputs,
        initial_states: &initial_states,
        horizon: sc.horizon,
        sigma2: sc.dataset.sigma2,
        ar1: sc.dataset.ar1,
        norm: sc.norm,
    };
    let (mc, runs) =
        monte_carlo_satisfaction(&inputs, &runtime_options(sc, mode), n_runs, sc.verify.seed)?;
    let coverage = coverage_experiment_uniform(
        sc.theta,
        sc.dataset.calibration,
        sc.verify.coverage_trials,
        sc.verify.seed.wrapping_add(1),
        None,
    )?;
    let union_conservative = union_bound_radius(
        &sc.system,
        &gains,
        sc.horizon,
        sc.dataset.sigma2,
        sc.verify.union_target,
        TailBound::Conservative,
        None,
    )?;
    let union_exact = union_bound_radius(
        &sc.system,
        &gains,
        sc.horizon,
        sc.dataset.sigma2,
        sc.verify.union_target,
        TailBound::Exact,
        None,
    )?;
    // per-agent region = radius of the agent's singleton clique
    let cp_max_agent_radius = sc
        .cliques
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_collaborative())
        .map(|(ci, _)| regions.radii[ci])
        .fold(0.0f64, f64::max);
    let target_rate = 1.0 - sc.theta;
    let artifact = VerifyArtifact {
        scenario: sc.name.clone(),
        runs: mc.runs,
        satisfied: mc.satisfied,
        rate: mc.rate,
        wilson_low: mc.wilson_low,
        wilson_high: mc.wilson_high,
        target_rate,
        meets_target: mc.meets(target_rate),
        containment_rate: mc.containment_rate,
        flagged_runs: mc.flagged_runs,
        selection_counts: mc.selection_counts.clone(),
        coverage_indicator_rate: coverage.indicator_rate,
        coverage_mean: coverage.mean,
        coverage_variance: coverage.variance,
        coverage_beta_mean: coverage.beta_mean,
        coverage_beta_variance: coverage.beta_variance,
        cp_max_agent_radius,
        union_radius_conservative: union_conservative.radius,
        union_radius_exact: union_exact.radius,
        union_target: sc.verify.union_target,
        cp_beats_union: cp_max_agent_radius < union_conservative.radius,
    };
    Ok(VerifyOutput { artifact, mc, runs })
}

/// Writes a closed-loop trace as JSON lines.
pub fn write_trace_jsonl(
    trace: &ClosedLoopTrace,
    scenario: &str,
    horizon: usize,
    seed: u64,
    path: &Path,
) -> Result<(), PipelineError> {
    let mut out = std::fs::File::create(path)?;
    let header = TraceLine::Header { scenario: scenario.into(), horizon, seed };
    writeln!(out, "{}", serde_json::to_string(&header).expect("serializable"))?;
    for (t, step) in trace.steps.iter().enumerate() {
        let line = TraceLine::Step {
            t: step.t,
            x: trace.states.iter().map(|xs| xs[t + 1].iter().copied().collect()).collect(),
            u: trace.inputs.iter().map(|us| us[t].iter().copied().collect()).collect(),
            selected: step.selected.clone(),
            clique_robustness: step.clique_robustness.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"))?;
    }
    let summary = TraceLine::Summary {
        verdict: trace.verdict,
        robustness: trace.robustness,
        per_clique_robustness: trace.per_clique_robustness.clone(),
        flagged: trace.flagged,
        selection_counts: trace.selection_counts.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&summary).expect("serializable"))?;
    Ok(())
}

pub fn save_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), PipelineError> {
    std::fs::write(path, crate::report::to_json_pretty(value))?;
    Ok(())
}

pub fn load_gains(path: &Path) -> Result<GainsArtifact, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let artifact: GainsArtifact =
        serde_json::from_str(&text).map_err(|e| PipelineError::Artifact(e.to_string()))?;
    if artifact.schema != GAINS_SCHEMA {
        return Err(PipelineError::Artifact(format!(
            "unexpected schema `{}`, wanted `{GAINS_SCHEMA}`",
            artifact.schema
        )));
    }
    Ok(artifact)
}

pub fn load_regions(path: &Path) -> Result<RegionsArtifact, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let artifact: RegionsArtifact =
        serde_json::from_str(&text).map_err(|e| PipelineError::Artifact(e.to_string()))?;
    if artifact.schema != REGIONS_SCHEMA {
        return Err(PipelineError::Artifact(format!(
            "unexpected schema `{}`, wanted `{REGIONS_SCHEMA}`",
            artifact.schema
        )));
    }
    Ok(artifact)
}
