//! Closed-loop execution with per-step coordination.
//!
//! Each round is synchronous: agents evaluate the tightened robustness of
//! their cliques on the previous plans, measure their state and the realized
//! disturbance, shift their incumbent plans onto the measurement, exchange
//! robustness summaries and shifted trajectories within cliques, and the
//! strictly-least-robust agent of every clique replans while the others keep
//! their plans. Applied inputs follow the disturbance-feedback law
//! `u(t) = sum_k Gamma^{t,k} w(k) + v(t)`.
//!
//! Message passing is in-process and round-synchronous; runs are
//! deterministic given the disturbance realization and option seeds.

use nalgebra::DVector;
use thiserror::Error;

use crate::mas::{
    aggregate_trajectories, CliqueSpec, FeedbackGains, InteractionGraph, MasSystem,
};
use crate::stl::{eval_robustness, AgentId, Trace};
use crate::synth::{
    step_plan, AgentCost, CliqueConstraint, CliqueRole, StepInputs, SynthError, SynthOptions,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("missing message from agent {agent} at step {t}")]
    ProtocolError { agent: AgentId, t: usize },
    #[error("realization supplies {got} steps, horizon needs {needed}")]
    RealizationTooShort { got: usize, needed: usize },
    #[error("initial plan missing for agent {0}")]
    MissingInitialPlan(AgentId),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Mas(#[from] crate::mas::MasError),
    #[error(transparent)]
    Stl(#[from] crate::stl::StlError),
}

/// Open loop applies the initial plans unchanged; distributed replans per
/// the coordination protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ExecutionMode {
    Distributed,
    OpenLoop,
}

#[derive(Debug, Clone)]
pub struct RuntimeOptions {
    pub omega: f64,
    pub mode: ExecutionMode,
    pub synth: SynthOptions,
}

/// What one agent shares with its clique mates each round.
#[derive(Debug, Clone)]
pub struct CliqueMessage {
    pub sender: AgentId,
    pub robustness_summary: f64,
    /// Measured history through `t` followed by the shifted nominal plan.
    pub trajectory: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub selected: Vec<AgentId>,
    /// Tightened robustness of every clique on the pre-measurement plans.
    pub clique_robustness: Vec<f64>,
    pub solved: Vec<AgentId>,
    pub fallbacks: Vec<AgentId>,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    /// Measured states `x(0..N)` per agent.
    pub states: Vec<Vec<DVector<f64>>>,
    /// Applied inputs `u(0..N-1)` per agent.
    pub inputs: Vec<Vec<DVector<f64>>>,
    /// Nominal inputs `v(0..N-1)` actually applied (feedback part removed).
    pub applied_nominal: Vec<Vec<DVector<f64>>>,
    /// Disturbances `w(0..N-1)` per agent, reconstructed from measurements.
    pub disturbances: Vec<Vec<DVector<f64>>>,
    pub steps: Vec<StepRecord>,
    pub verdict: bool,
    /// Exact (untightened) robustness of the conjunction over cliques on the
    /// measured trajectory.
    pub robustness: f64,
    pub per_clique_robustness: Vec<f64>,
    pub flagged: bool,
    pub selection_counts: Vec<usize>,
}

/// Agents strictly minimal (lowest index wins ties) within every clique they
/// belong to. `None` summaries are protocol errors.
pub fn select_solvers(
    summaries: &[Option<f64>],
    graph: &InteractionGraph,
    cliques: &[CliqueSpec],
    t: usize,
) -> Result<Vec<AgentId>, RuntimeError> {
    for (agent, s) in summaries.iter().enumerate() {
        if s.is_none() && !graph.memberships[agent].is_empty() {
            return Err(RuntimeError::ProtocolError { agent, t });
        }
    }
    let wins = |i: AgentId, j: AgentId| -> bool {
        let (ri, rj) = (summaries[i].unwrap(), summaries[j].unwrap());
        ri < rj || (ri == rj && i < j)
    };
    let mut out = Vec::new();
    'agents: for i in 0..graph.num_agents {
        if graph.memberships[i].is_empty() {
            continue;
        }
        for &ci in &graph.memberships[i] {
            for &j in &cliques[ci].members {
                if j != i && !wins(i, j) {
                    continue 'agents;
                }
            }
        }
        out.push(i);
    }
    Ok(out)
}

/// Shift the incumbent plan onto the measured state: history through `t`,
/// then the nominal rollout under the remaining inputs.
fn shift_plan(
    system: &MasSystem,
    agent: AgentId,
    history: &[DVector<f64>],
    plan_inputs: &[DVector<f64>],
    t: usize,
    horizon: usize,
) -> Vec<DVector<f64>> {
    let dynamics = &system.agents[agent];
    let mut traj = Vec::with_capacity(horizon + 1);
    traj.extend_from_slice(&history[..=t]);
    let mut z = history[t].clone();
    for v in plan_inputs.iter().take(horizon).skip(t) {
        z = &dynamics.a * &z + &dynamics.b * v;
        traj.push(z.clone());
    }
    traj
}

/// Tightened robustness of every clique formula on composite trajectories.
pub fn clique_robustness(
    system: &MasSystem,
    cliques: &[CliqueSpec],
    margins: &[f64],
    trajectories: &[Vec<DVector<f64>>],
) -> Result<Vec<f64>, RuntimeError> {
    let mut out = Vec::with_capacity(cliques.len());
    for (ci, clique) in cliques.iter().enumerate() {
        let agg = aggregate_trajectories(trajectories, &clique.members)?;
        let layout = system.layout.restrict(&clique.members);
        let local = Trace::new(layout, agg)?;
        let rho = eval_robustness(&clique.formula, &local, 0)?;
        out.push(rho - margins[ci]);
    }
    Ok(out)
}

/// Runs one closed-loop episode over a disturbance realization.
///
/// `initial_inputs`/`initial_states` are the per-agent time-zero plans
/// (broadcast before the first round). `realization[agent][t]` is the
/// disturbance hitting that agent at step `t`.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    system: &MasSystem,
    cliques: &[CliqueSpec],
    graph: &InteractionGraph,
    margins: &[f64],
    gains: &FeedbackGains,
    costs: &[AgentCost],
    initial_inputs: &[Vec<DVector<f64>>],
    initial_states: &[Vec<DVector<f64>>],
    realization: &[Vec<DVector<f64>>],
    horizon: usize,
    opts: &RuntimeOptions,
) -> Result<ClosedLoopTrace, RuntimeError> {
    let m = system.num_agents();
    if initial_inputs.len() != m || initial_states.len() != m {
        return Err(RuntimeError::MissingInitialPlan(initial_inputs.len().min(initial_states.len())));
    }
    for w in realization.iter() {
        if w.len() < horizon {
            return Err(RuntimeError::RealizationTooShort { got: w.len(), needed: horizon });
        }
    }

    let mut x: Vec<Vec<DVector<f64>>> =
        system.agents.iter().map(|a| vec![a.x0.clone()]).collect();
    let mut u: Vec<Vec<DVector<f64>>> = vec![Vec::new(); m];
    let mut v_applied: Vec<Vec<DVector<f64>>> = vec![Vec::new(); m];
    let mut w_rec: Vec<Vec<DVector<f64>>> = vec![Vec::new(); m];
    let mut plan_inputs: Vec<Vec<DVector<f64>>> = initial_inputs.to_vec();
    let mut plan_traj: Vec<Vec<DVector<f64>>> = initial_states.to_vec();

    let mut steps = Vec::new();
    let mut flagged = false;
    let mut selection_counts = vec![0usize; m];

    // t = 0: apply the initial inputs (no disturbance history yet)
    for i in 0..m {
        let vi = plan_inputs[i][0].clone();
        let next =
            &system.agents[i].a * &x[i][0] + &system.agents[i].b * &vi + &realization[i][0];
        x[i].push(next);
        u[i].push(vi.clone());
        v_applied[i].push(vi);
        w_rec[i].push(realization[i][0].clone());
    }

    for t in 1..horizon {
        // summaries on the pre-measurement plans
        let clique_rho = clique_robustness(system, cliques, margins, &plan_traj)?;
        // measurement sanity: the reconstructed disturbance matches
        for i in 0..m {
            let pred =
                &system.agents[i].a * &x[i][t - 1] + &system.agents[i].b * &u[i][t - 1];
            debug_assert!(((&x[i][t] - pred) - &realization[i][t - 1]).amax() < 1e-9);
        }
        // shift incumbents onto the measurement; exchange within cliques
        let messages: Vec<CliqueMessage> = (0..m)
            .map(|i| CliqueMessage {
                sender: i,
                robustness_summary: graph.memberships[i]
                    .iter()
                    .map(|&ci| clique_rho[ci])
                    .fold(f64::INFINITY, f64::min),
                trajectory: shift_plan(system, i, &x[i], &plan_inputs[i], t, horizon),
            })
            .collect();
        plan_traj = messages.iter().map(|msg| msg.trajectory.clone()).collect();
        let mut record = StepRecord {
            t,
            selected: Vec::new(),
            clique_robustness: clique_rho.clone(),
            solved: Vec::new(),
            fallbacks: Vec::new(),
        };
        if opts.mode == ExecutionMode::Distributed {
            let summaries: Vec<Option<f64>> =
                messages.iter().map(|msg| Some(msg.robustness_summary)).collect();
            let selected = select_solvers(&summaries, graph, cliques, t)?;
            record.selected = selected.clone();
            for &i in &selected {
                selection_counts[i] += 1;
                let collaborative: Vec<usize> = graph.memberships[i]
                    .iter()
                    .copied()
                    .filter(|&ci| cliques[ci].is_collaborative())
                    .collect();
                let target = collaborative
                    .iter()
                    .copied()
                    .min_by(|&a, &b| clique_rho[a].partial_cmp(&clique_rho[b]).unwrap());
                let mut constraints = Vec::new();
                for &ci in &graph.memberships[i] {
                    let clique = &cliques[ci];
                    let role = if !clique.is_collaborative() {
                        CliqueRole::Individual
                    } else if Some(ci) == target {
                        CliqueRole::Target
                    } else {
                        CliqueRole::Maintain
                    };
                    let bound = match role {
                        CliqueRole::Individual => 0.0,
                        _ => clique_rho[ci].min(0.0),
                    };
                    constraints.push(CliqueConstraint {
                        members: clique.members.clone(),
                        formula: clique.formula.clone(),
                        margin: margins[ci],
                        bound,
                        role,
                    });
                }
                // healthy cliques only need a short polish from the
                // incumbent; full annealing is reserved for repairs
                let all_ok =
                    graph.memberships[i].iter().all(|&ci| clique_rho[ci] >= 0.0);
                let mut synth_opts = opts.synth.clone();
                if all_ok {
                    if let Some(&last) = synth_opts.beta_schedule.last() {
                        synth_opts.beta_schedule = vec![last];
                    }
                    synth_opts.restarts = 0;
                    synth_opts.lbfgs.max_iters = synth_opts.lbfgs.max_iters.min(30);
                }
                synth_opts.seed =
                    opts.synth.seed.wrapping_add((t * m + i) as u64 * 0x9e37_79b9);
                let result = step_plan(
                    StepInputs {
                        system,
                        agent: i,
                        t,
                        horizon,
                        cost: &costs[i],
                        omega: opts.omega,
                        trajectories: &plan_traj,
                        incumbent: plan_inputs[i][t..].to_vec(),
                        constraints,
                    },
                    &synth_opts,
                )?;
                if result.feasible {
                    record.solved.push(i);
                    for (k, vk) in result.inputs[0].iter().enumerate() {
                        plan_inputs[i][t + k] = vk.clone();
                    }
                    plan_traj[i] = result.states[0].clone();
                } else {
                    // infeasible subproblem: keep the shifted incumbent
                    record.fallbacks.push(i);
                    flagged = true;
                }
            }
        }
        steps.push(record);
        // apply u(t) and simulate x(t+1)
        for i in 0..m {
            let mut feedback = DVector::zeros(system.agents[i].input_dim());
            for k in 0..t {
                feedback += gains.agents[i].block(t, k) * &w_rec[i][k];
            }
            let vi = plan_inputs[i][t].clone();
            let ui = &feedback + &vi;
            let next =
                &system.agents[i].a * &x[i][t] + &system.agents[i].b * &ui + &realization[i][t];
            x[i].push(next);
            u[i].push(ui);
            v_applied[i].push(vi);
            w_rec[i].push(realization[i][t].clone());
        }
    }
    // final verdict on the measured trajectory, untightened semantics
    let zero_margins = vec![0.0; cliques.len()];
    let per_clique = clique_robustness(system, cliques, &zero_margins, &x)?;
    let robustness = per_clique.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ClosedLoopTrace {
        states: x,
        inputs: u,
        applied_nominal: v_applied,
        disturbances: w_rec,
        steps,
        verdict: robustness >= 0.0,
        robustness,
        per_clique_robustness: per_clique,
        flagged,
        selection_counts,
    })
}
