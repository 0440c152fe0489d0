//! Scenario description: a single TOML file declaring agents, regions,
//! clique formulas, dataset parameters and solver settings.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TrajectoryNorm;
use crate::mas::{AgentDynamics, CliqueSpec, InteractionGraph, MasSystem};
use crate::stl::{parse_formula, Region, StlError};
use crate::synth::{AgentCost, SynthOptions};
use crate::uq::UqError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config invalid: {0}")]
    Validation(String),
    #[error("formula for clique {members:?}: {source}")]
    Formula { members: Vec<String>, source: StlError },
    #[error(transparent)]
    Mas(#[from] crate::mas::MasError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    /// Tracking reference for the quadratic state cost; defaults to x0.
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CliqueConfig {
    pub members: Vec<String>,
    pub formula: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    #[serde(default)]
    pub state_weight: f64,
    #[serde(default = "one")]
    pub input_weight: f64,
    #[serde(default)]
    pub terminal_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { state_weight: 0.0, input_weight: 1.0, terminal_weight: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub sigma2: f64,
    /// Total sample count k + 1 (test point included).
    pub samples: usize,
    /// Calibration count k1.
    pub calibration: usize,
    pub seed: u64,
    /// AR(1) time correlation of the generator; 0 = i.i.d. steps.
    #[serde(default)]
    pub ar1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_tau_max")]
    pub tau_max: usize,
    /// L1 shrinkage on feedback response coefficients (overfitting guard).
    #[serde(default = "default_shrinkage")]
    pub gain_shrinkage: f64,
}

fn default_tau_max() -> usize {
    4
}

fn default_shrinkage() -> f64 {
    1e-4
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { tau_max: 4, gain_shrinkage: default_shrinkage() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Improvement weight for the per-step problems; 0 means auto
    /// (1000 x the largest cost coefficient).
    #[serde(default)]
    pub omega: f64,
    #[serde(default = "default_beta")]
    pub beta: Vec<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_step_beta")]
    pub step_beta: Vec<f64>,
    #[serde(default = "default_step_restarts")]
    pub step_restarts: usize,
    #[serde(default = "default_step_iters")]
    pub step_max_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_beta() -> Vec<f64> {
    vec![1.0, 5.0, 25.0, 125.0]
}
fn default_restarts() -> usize {
    5
}
fn default_step_beta() -> Vec<f64> {
    vec![25.0, 125.0]
}
fn default_step_restarts() -> usize {
    1
}
fn default_step_iters() -> usize {
    40
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            omega: 0.0,
            beta: default_beta(),
            restarts: default_restarts(),
            step_beta: default_step_beta(),
            step_restarts: default_step_restarts(),
            step_max_iters: default_step_iters(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_trials")]
    pub coverage_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_union_target")]
    pub union_target: f64,
}

fn default_runs() -> usize {
    500
}
fn default_trials() -> usize {
    2000
}
fn default_union_target() -> f64 {
    0.70
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            coverage_trials: default_trials(),
            seed: 0,
            union_target: default_union_target(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    #[serde(default = "default_name")]
    pub name: String,
    pub horizon: usize,
    pub theta: f64,
    #[serde(default = "default_norm")]
    pub norm: String,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub regions: Vec<Region>,
    pub cliques: Vec<CliqueConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_norm() -> String {
    "max-inf".into()
}

/// Fully validated scenario ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub system: MasSystem,
    pub cliques: Vec<CliqueSpec>,
    pub graph: InteractionGraph,
    pub horizon: usize,
    pub theta: f64,
    pub norm: TrajectoryNorm,
    pub costs: Vec<AgentCost>,
    pub regions: Vec<Region>,
    pub dataset: DatasetConfig,
    pub training: TrainingConfig,
    pub synthesis: SynthesisConfig,
    pub verify: VerifyConfig,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn omega(&self) -> f64 {
        if self.synthesis.omega > 0.0 {
            self.synthesis.omega
        } else {
            let max_coeff = self
                .costs
                .iter()
                .map(|c| c.largest_weight())
                .fold(0.0f64, f64::max)
                .max(1e-6);
            1e3 * max_coeff
        }
    }

    pub fn synth_options(&self) -> SynthOptions {
        SynthOptions {
            beta_schedule: self.synthesis.beta.clone(),
            restarts: self.synthesis.restarts,
            seed: self.synthesis.seed,
            ..Default::default()
        }
    }

    pub fn step_synth_options(&self) -> SynthOptions {
        SynthOptions {
            beta_schedule: self.synthesis.step_beta.clone(),
            restarts: self.synthesis.step_restarts,
            seed: self.synthesis.seed,
            lbfgs: crate::synth::OptimOptions {
                max_iters: self.synthesis.step_max_iters,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError::Validation(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(ConfigError::Validation(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

pub fn from_toml_str(text: &str) -> Result<Scenario, ConfigError> {
    let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    build(cfg)
}

pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    from_toml_str(&text)
}

pub fn build(cfg: Config) -> Result<Scenario, ConfigError> {
    if !(0.0..1.0).contains(&cfg.theta) || cfg.theta == 0.0 {
        return Err(ConfigError::Validation(format!("theta must be in (0,1), got {}", cfg.theta)));
    }
    if cfg.horizon == 0 {
        return Err(ConfigError::Validation("horizon must be positive".into()));
    }
    if cfg.dataset.sigma2 <= 0.0 {
        return Err(ConfigError::Validation("dataset.sigma2 must be positive".into()));
    }
    let norm = match cfg.norm.as_str() {
        "max-inf" => TrajectoryNorm::MaxInf,
        "max-l2" => TrajectoryNorm::MaxL2,
        other => {
            return Err(ConfigError::Validation(format!(
                "norm must be `max-inf` or `max-l2`, got `{other}`"
            )))
        }
    };
    let mut warnings = Vec::new();
    let mut names = Vec::new();
    let mut agents = Vec::new();
    let mut costs = Vec::new();
    for a in &cfg.agents {
        if names.contains(&a.name) {
            return Err(ConfigError::Validation(format!("duplicate agent name `{}`", a.name)));
        }
        let dynamics = AgentDynamics::new(
            to_matrix(&a.a, &format!("agent {} A", a.name))?,
            to_matrix(&a.b, &format!("agent {} B", a.name))?,
            DVector::from_vec(a.x0.clone()),
        )?;
        if !dynamics.is_stabilizable() {
            warnings.push(format!("agent {}: (A, B) not stabilizable", a.name));
        }
        let reference = match &a.reference {
            Some(r) => {
                if r.len() != dynamics.state_dim() {
                    return Err(ConfigError::Validation(format!(
                        "agent {} reference has dimension {}, state dimension is {}",
                        a.name,
                        r.len(),
                        dynamics.state_dim()
                    )));
                }
                DVector::from_vec(r.clone())
            }
            None => dynamics.x0.clone(),
        };
        costs.push(AgentCost {
            state_weight: cfg.cost.state_weight,
            input_weight: cfg.cost.input_weight,
            terminal_weight: cfg.cost.terminal_weight,
            reference,
        });
        names.push(a.name.clone());
        agents.push(dynamics);
    }
    let system = MasSystem::new(names.clone(), agents);

    let mut cliques = Vec::new();
    for c in &cfg.cliques {
        let mut ids = Vec::new();
        for m in &c.members {
            let id = system
                .layout
                .index_of(m)
                .ok_or_else(|| ConfigError::Validation(format!("unknown clique member `{m}`")))?;
            if ids.contains(&id) {
                return Err(ConfigError::Validation(format!("duplicate clique member `{m}`")));
            }
            ids.push(id);
        }
        ids.sort_unstable();
        let local_layout = system.layout.restrict(&ids);
        let slots: Vec<usize> = (0..ids.len()).collect();
        let formula = parse_formula(&c.formula, &local_layout, &slots, &cfg.regions)
            .map_err(|source| ConfigError::Formula { members: c.members.clone(), source })?;
        let clique = CliqueSpec::new(ids, formula)?;
        clique.validate_horizon(cfg.horizon)?;
        cliques.push(clique);
    }
    let graph = InteractionGraph::build(&cliques, system.num_agents())?;
    for (i, members) in graph.memberships.iter().enumerate() {
        if members.is_empty() {
            warnings.push(format!(
                "agent {} appears in no clique; it has no task",
                system.layout.name(i)
            ));
        } else if !members.iter().any(|&c| !cliques[c].is_collaborative()) {
            warnings.push(format!(
                "agent {} has no individual task",
                system.layout.name(i)
            ));
        }
    }
    // dataset split must be well-formed
    crate::data::DatasetSplit::new(cfg.dataset.calibration, cfg.dataset.samples)?;
    Ok(Scenario {
        name: cfg.name,
        system,
        cliques,
        graph,
        horizon: cfg.horizon,
        theta: cfg.theta,
        norm,
        costs,
        regions: cfg.regions,
        dataset: cfg.dataset,
        training: cfg.training,
        synthesis: cfg.synthesis,
        verify: cfg.verify,
        warnings,
    })
}
