use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::lbfgs::{minimize, OptimOptions};
use super::problem::AgentCost;
use super::SynthError;
use crate::mas::MasSystem;
use crate::stl::{
    eval_robustness, smooth_robustness, smoothing_gap, AgentId, SignalLayout, StlFormula, Trace,
};

/// How a clique constraint enters a subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliqueRole {
    /// Tightened robustness must be nonnegative.
    Individual,
    /// Least-robust collaborative clique: lower-bounded by its previous
    /// level and rewarded for improvement up to satisfaction.
    Target,
    /// Other collaborative cliques: must not degrade below their previous
    /// level (or below zero once satisfied).
    Maintain,
}

/// One robustness constraint on clique trajectories.
#[derive(Debug, Clone)]
pub struct CliqueConstraint {
    pub members: Vec<AgentId>,
    pub formula: StlFormula,
    pub margin: f64,
    /// Lower bound on the tightened robustness (0 for `Individual`,
    /// `min(0, previous)` for `Target`/`Maintain`).
    pub bound: f64,
    pub role: CliqueRole,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub beta_schedule: Vec<f64>,
    pub restarts: usize,
    pub penalty: f64,
    pub penalty_growth: f64,
    pub lbfgs: OptimOptions,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            beta_schedule: vec![1.0, 5.0, 25.0, 125.0],
            restarts: 5,
            penalty: 10.0,
            penalty_growth: 10.0,
            lbfgs: OptimOptions { max_iters: 150, ..Default::default() },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthDiagnostics {
    pub restarts_used: usize,
    pub iterations: usize,
    pub beta_final: f64,
    /// Certified smoothed lower bounds (smooth - gap - margin) at the final
    /// temperature; never above the exact values.
    pub certified: Vec<f64>,
    pub incumbent_feasible: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub decision: Vec<AgentId>,
    /// Per decision agent, tail inputs `v(t0..N-1)`.
    pub inputs: Vec<Vec<DVector<f64>>>,
    /// Per decision agent, full nominal trajectory `z(0..N)` including the
    /// fixed prefix.
    pub states: Vec<Vec<DVector<f64>>>,
    /// Exact tightened robustness per constraint.
    pub constraint_robustness: Vec<f64>,
    pub cost: f64,
    pub merit: f64,
    pub feasible: bool,
    pub violations: Vec<(usize, f64)>,
    pub diagnostics: SynthDiagnostics,
}

const FEAS_TOL: f64 = 1e-9;

struct TailSolver<'a> {
    system: &'a MasSystem,
    decision: Vec<AgentId>,
    t0: usize,
    horizon: usize,
    start_states: Vec<DVector<f64>>,
    costs: Vec<&'a AgentCost>,
    constraints: &'a [CliqueConstraint],
    omega: f64,
    /// Working copy of all agents' trajectories; decision tails overwritten.
    work: std::cell::RefCell<Vec<Vec<DVector<f64>>>>,
    /// Prebuilt per-constraint clique traces; frozen member slices filled
    /// once, decision slices rewritten per rollout.
    traces: std::cell::RefCell<Vec<Trace>>,
    /// Per constraint: (member slot offset, decision index) pairs.
    decision_slots: Vec<Vec<(usize, usize)>>,
    gaps: Vec<f64>, // per constraint, recomputed per beta
}

impl<'a> TailSolver<'a> {
    fn tail_len(&self) -> usize {
        self.horizon - self.t0
    }

    fn decision_dim(&self) -> usize {
        self.decision
            .iter()
            .map(|&a| self.system.agents[a].input_dim() * self.tail_len())
            .sum()
    }

    fn decode(&self, v: &DVector<f64>) -> Vec<Vec<DVector<f64>>> {
        let mut out = Vec::with_capacity(self.decision.len());
        let mut off = 0;
        for &a in &self.decision {
            let m = self.system.agents[a].input_dim();
            let mut tail = Vec::with_capacity(self.tail_len());
            for _ in 0..self.tail_len() {
                tail.push(DVector::from_iterator(m, (0..m).map(|i| v[off + i])));
                off += m;
            }
            out.push(tail);
        }
        out
    }

    fn encode(&self, tails: &[Vec<DVector<f64>>]) -> DVector<f64> {
        let mut flat = Vec::with_capacity(self.decision_dim());
        for tail in tails {
            for step in tail {
                flat.extend(step.iter().copied());
            }
        }
        DVector::from_vec(flat)
    }

    /// Rolls out decision tails into the work buffer and the per-constraint
    /// clique traces.
    fn rollout(&self, tails: &[Vec<DVector<f64>>]) {
        let mut work = self.work.borrow_mut();
        for (di, &a) in self.decision.iter().enumerate() {
            let dynamics = &self.system.agents[a];
            let mut z = self.start_states[di].clone();
            for (k, v) in tails[di].iter().enumerate() {
                z = &dynamics.a * &z + &dynamics.b * v;
                work[a][self.t0 + 1 + k] = z.clone();
            }
        }
        let mut traces = self.traces.borrow_mut();
        for (ci, slots) in self.decision_slots.iter().enumerate() {
            let trace = &mut traces[ci];
            for &(offset, di) in slots {
                let a = self.decision[di];
                let dim = self.system.agents[a].state_dim();
                for tau in self.t0 + 1..=self.horizon {
                    trace.samples_mut()[tau]
                        .rows_mut(offset, dim)
                        .copy_from(&work[a][tau]);
                }
            }
        }
    }

    /// Smoothed objective and gradient at temperature `beta`, penalty `kappa`.
    fn eval(&self, v: &DVector<f64>, beta: f64, kappa: f64) -> (f64, DVector<f64>) {
        let tails = self.decode(v);
        self.rollout(&tails);
        let tail = self.tail_len();
        // per decision agent gradient wrt its states z(t0+1..=N)
        let mut gz: Vec<Vec<DVector<f64>>> = self
            .decision
            .iter()
            .map(|&a| vec![DVector::zeros(self.system.agents[a].state_dim()); tail])
            .collect();
        let mut grad_v = DVector::zeros(v.len());
        let mut total = 0.0;
        // cost
        {
            let work = self.work.borrow();
            let mut off = 0;
            for (di, &a) in self.decision.iter().enumerate() {
                let cost = self.costs[di];
                let m = self.system.agents[a].input_dim();
                for k in 0..tail {
                    let z = &work[a][self.t0 + k]; // state entering stage t0+k
                    let vk = &tails[di][k];
                    total += cost.stage(z, vk);
                    for i in 0..m {
                        grad_v[off + k * m + i] += 2.0 * cost.input_weight * vk[i];
                    }
                    if k > 0 && cost.state_weight > 0.0 {
                        gz[di][k - 1] += (z - &cost.reference) * (2.0 * cost.state_weight);
                    }
                }
                let zn = &work[a][self.horizon];
                total += cost.terminal(zn);
                if cost.terminal_weight > 0.0 {
                    gz[di][tail - 1] += (zn - &cost.reference) * (2.0 * cost.terminal_weight);
                }
                off += m * tail;
            }
        }
        // constraints
        let traces = self.traces.borrow();
        for (ci, c) in self.constraints.iter().enumerate() {
            let trace = &traces[ci];
            let (smooth, grad_trace) =
                smooth_robustness(&c.formula, trace, 0, beta).expect("trace covers horizon");
            let cert = smooth - self.gaps[ci] - c.margin;
            let mut weight = 0.0;
            match c.role {
                CliqueRole::Individual | CliqueRole::Maintain | CliqueRole::Target => {
                    let viol = (c.bound - cert).max(0.0);
                    if viol > 0.0 {
                        total += kappa * viol * viol;
                        weight += -2.0 * kappa * viol;
                    }
                }
            }
            if c.role == CliqueRole::Target {
                // softplus surrogate of omega * max(0, -cert): rewards
                // improvement, saturates once satisfied
                let x = -beta * cert;
                let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
                total += self.omega / beta * softplus;
                let sigma = 1.0 / (1.0 + (beta * cert).exp());
                weight += -self.omega * sigma;
            }
            if weight != 0.0 {
                // scatter the trace gradient into decision agents' state grads
                let total_dim = trace.layout().total_dim();
                for &(offset, di) in &self.decision_slots[ci] {
                    let dim = self.system.agents[self.decision[di]].state_dim();
                    for tau in self.t0 + 1..=self.horizon {
                        let g = &mut gz[di][tau - self.t0 - 1];
                        for d in 0..dim {
                            g[d] += weight * grad_trace[tau * total_dim + offset + d];
                        }
                    }
                }
            }
        }
        // adjoint: grad_v(s) += B' mu(s+1), mu(t) = gz(t) + A' mu(t+1)
        let mut off = 0;
        for (di, &a) in self.decision.iter().enumerate() {
            let dynamics = &self.system.agents[a];
            let m = dynamics.input_dim();
            let mut mu = DVector::zeros(dynamics.state_dim());
            for k in (0..tail).rev() {
                mu = &gz[di][k] + &dynamics.a.transpose() * mu;
                let gv = dynamics.b.transpose() * &mu;
                for i in 0..m {
                    grad_v[off + k * m + i] += gv[i];
                }
            }
            off += m * tail;
        }
        (total, grad_v)
    }

    /// Exact constraint evaluation and merit of a candidate.
    fn assess(&self, tails: &[Vec<DVector<f64>>]) -> Assessment {
        self.rollout(tails);
        let traces = self.traces.borrow();
        let mut robustness = Vec::with_capacity(self.constraints.len());
        let mut violations = Vec::new();
        let mut reward = 0.0;
        for (ci, c) in self.constraints.iter().enumerate() {
            let rho = eval_robustness(&c.formula, &traces[ci], 0).expect("trace covers horizon")
                - c.margin;
            robustness.push(rho);
            if rho < c.bound - FEAS_TOL {
                violations.push((ci, c.bound - rho));
            }
            if c.role == CliqueRole::Target {
                reward += -self.omega * rho.min(0.0);
            }
        }
        // prefix stages are sunk cost; charge the tail only
        let mut cost = 0.0;
        {
            let work = self.work.borrow();
            for (di, &a) in self.decision.iter().enumerate() {
                for k in 0..self.tail_len() {
                    cost += self.costs[di].stage(&work[a][self.t0 + k], &tails[di][k]);
                }
                cost += self.costs[di].terminal(&work[a][self.horizon]);
            }
        }
        let feasible = violations.is_empty();
        let merit = cost + reward;
        Assessment { robustness, violations, cost, merit, feasible }
    }

    fn solve(&self, warm: &[Vec<DVector<f64>>], opts: &SynthOptions) -> SynthesisResult {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let warm_flat = self.encode(warm);
        let mut best: Option<(Assessment, Vec<Vec<DVector<f64>>>)> = None;
        let mut iterations = 0;
        let mut restarts_used = 0;
        let consider =
            |cand: (Assessment, Vec<Vec<DVector<f64>>>),
             best: &mut Option<(Assessment, Vec<Vec<DVector<f64>>>)>| {
                let better = match best {
                    None => true,
                    Some((b, _)) => match (cand.0.feasible, b.feasible) {
                        (true, false) => true,
                        (false, true) => false,
                        (true, true) => cand.0.merit < b.merit,
                        (false, false) => {
                            let cv: f64 = cand.0.violations.iter().map(|v| v.1).sum();
                            let bv: f64 = b.violations.iter().map(|v| v.1).sum();
                            cv < bv
                        }
                    },
                };
                if better {
                    *best = Some(cand);
                }
            };
        // the warm start itself is always a candidate
        consider((self.assess(warm), warm.to_vec()), &mut best);
        for restart in 0..=opts.restarts {
            restarts_used = restart;
            let mut x = if restart == 0 {
                warm_flat.clone()
            } else {
                let scale = 0.3 * restart as f64;
                DVector::from_iterator(
                    warm_flat.len(),
                    warm_flat.iter().map(|&v| v + scale * rng.sample::<f64, _>(rand_distr::StandardNormal)),
                )
            };
            let mut kappa = opts.penalty;
            for &beta in &opts.beta_schedule {
                let (xn, _, it) = minimize(
                    |v: &DVector<f64>| self.eval(v, beta, kappa),
                    x.clone(),
                    &opts.lbfgs,
                );
                x = xn;
                iterations += it;
                kappa *= opts.penalty_growth;
            }
            let tails = self.decode(&x);
            consider((self.assess(&tails), tails), &mut best);
            // restarts exist to escape infeasibility; once feasible, the
            // warm-started solution is kept
            if best.as_ref().map(|(a, _)| a.feasible).unwrap_or(false) {
                break;
            }
        }
        let (assessment, tails) = best.expect("at least the warm start was assessed");
        // certified lower bounds at the final temperature
        self.rollout(&tails);
        let beta_final = *opts.beta_schedule.last().unwrap_or(&1.0);
        let certified: Vec<f64> = {
            let traces = self.traces.borrow();
            self.constraints
                .iter()
                .enumerate()
                .map(|(ci, c)| {
                    let (smooth, _) = smooth_robustness(&c.formula, &traces[ci], 0, beta_final)
                        .expect("trace covers horizon");
                    smooth - self.gaps[ci] - c.margin
                })
                .collect()
        };
        let states: Vec<Vec<DVector<f64>>> = {
            let work = self.work.borrow();
            self.decision.iter().map(|&a| work[a].clone()).collect()
        };
        SynthesisResult {
            decision: self.decision.clone(),
            inputs: tails,
            states,
            constraint_robustness: assessment.robustness,
            cost: assessment.cost,
            merit: assessment.merit,
            feasible: assessment.feasible,
            violations: assessment.violations,
            diagnostics: SynthDiagnostics {
                restarts_used,
                iterations,
                beta_final,
                certified,
                incumbent_feasible: None,
            },
        }
    }
}

struct Assessment {
    robustness: Vec<f64>,
    violations: Vec<(usize, f64)>,
    cost: f64,
    merit: f64,
    feasible: bool,
}

fn build_solver<'a>(
    system: &'a MasSystem,
    decision: Vec<AgentId>,
    t0: usize,
    horizon: usize,
    trajectories: Vec<Vec<DVector<f64>>>,
    start_states: Vec<DVector<f64>>,
    costs: Vec<&'a AgentCost>,
    constraints: &'a [CliqueConstraint],
    omega: f64,
    beta_for_gap: f64,
) -> Result<TailSolver<'a>, SynthError> {
    let mut traces = Vec::with_capacity(constraints.len());
    let mut decision_slots = Vec::with_capacity(constraints.len());
    let mut gaps = Vec::with_capacity(constraints.len());
    for c in constraints {
        c.formula.validate()?;
        let names: Vec<String> =
            c.members.iter().map(|&m| system.layout.name(m).to_string()).collect();
        let dims: Vec<usize> = c.members.iter().map(|&m| system.layout.dim(m)).collect();
        // restricted layout: slot index within the clique
        let layout = SignalLayout::new(names, dims);
        let samples: Vec<DVector<f64>> = (0..=horizon)
            .map(|t| {
                let mut sample = DVector::zeros(layout.total_dim());
                for (slot, &m) in c.members.iter().enumerate() {
                    sample
                        .rows_mut(layout.offset(slot), layout.dim(slot))
                        .copy_from(&trajectories[m][t]);
                }
                sample
            })
            .collect();
        let slots: Vec<(usize, usize)> = c
            .members
            .iter()
            .enumerate()
            .filter_map(|(slot, &m)| {
                decision.iter().position(|&d| d == m).map(|di| (layout.offset(slot), di))
            })
            .collect();
        gaps.push(smoothing_gap(&c.formula, beta_for_gap));
        traces.push(Trace::new(layout, samples)?);
        decision_slots.push(slots);
    }
    Ok(TailSolver {
        system,
        decision,
        t0,
        horizon,
        start_states,
        costs,
        constraints,
        omega,
        work: std::cell::RefCell::new(trajectories),
        traces: std::cell::RefCell::new(traces),
        decision_slots,
        gaps,
    })
}

fn blank_trajectories(system: &MasSystem, horizon: usize) -> Vec<Vec<DVector<f64>>> {
    system
        .agents
        .iter()
        .map(|a| {
            let mut tr = vec![DVector::zeros(a.state_dim()); horizon + 1];
            tr[0] = a.x0.clone();
            tr
        })
        .collect()
}

/// Joint synthesis over all agents with every clique constraint hard.
pub fn solve_centralized(
    system: &MasSystem,
    constraints: Vec<CliqueConstraint>,
    costs: &[AgentCost],
    horizon: usize,
    opts: &SynthOptions,
) -> Result<SynthesisResult, SynthError> {
    let decision: Vec<AgentId> = (0..system.num_agents()).collect();
    let start_states = system.agents.iter().map(|a| a.x0.clone()).collect();
    let beta_final = *opts.beta_schedule.last().unwrap_or(&1.0);
    let solver = build_solver(
        system,
        decision.clone(),
        0,
        horizon,
        blank_trajectories(system, horizon),
        start_states,
        costs.iter().collect(),
        &constraints,
        0.0,
        beta_final,
    )?;
    let warm: Vec<Vec<DVector<f64>>> = decision
        .iter()
        .map(|&a| vec![DVector::zeros(system.agents[a].input_dim()); horizon])
        .collect();
    Ok(solver.solve(&warm, opts))
}

/// Per-agent plan at time zero under the agent's individual (singleton
/// clique) tasks only.
pub fn initial_plan(
    system: &MasSystem,
    agent: AgentId,
    constraints: Vec<CliqueConstraint>,
    cost: &AgentCost,
    horizon: usize,
    opts: &SynthOptions,
) -> Result<SynthesisResult, SynthError> {
    for c in &constraints {
        debug_assert!(c.members.iter().all(|&m| m == agent));
    }
    let beta_final = *opts.beta_schedule.last().unwrap_or(&1.0);
    let solver = build_solver(
        system,
        vec![agent],
        0,
        horizon,
        blank_trajectories(system, horizon),
        vec![system.agents[agent].x0.clone()],
        vec![cost],
        &constraints,
        0.0,
        beta_final,
    )?;
    let warm = vec![vec![DVector::zeros(system.agents[agent].input_dim()); horizon]];
    Ok(solver.solve(&warm, opts))
}

/// Inputs to the per-step replanning problem of one agent.
pub struct StepInputs<'a> {
    pub system: &'a MasSystem,
    pub agent: AgentId,
    pub t: usize,
    pub horizon: usize,
    pub cost: &'a AgentCost,
    pub omega: f64,
    /// Current composite trajectories of every agent (measured history
    /// through `t`, shifted plans beyond).
    pub trajectories: &'a [Vec<DVector<f64>>],
    /// Incumbent tail `v(t..N-1)` for this agent.
    pub incumbent: Vec<DVector<f64>>,
    pub constraints: Vec<CliqueConstraint>,
}

/// Replans one agent's tail: keeps its individual tasks tight, rewards
/// improvement of the least-robust collaborative clique and forbids
/// degradation of the others. Clique-mate trajectories stay frozen at their
/// communicated plans. The incumbent plan is always assessed first, so the
/// returned plan is never worse.
pub fn step_plan(inp: StepInputs<'_>, opts: &SynthOptions) -> Result<SynthesisResult, SynthError> {
    let has_target = inp.constraints.iter().any(|c| c.role == CliqueRole::Target);
    if has_target && inp.omega <= 0.0 {
        return Err(SynthError::OmegaNonPositive(inp.omega));
    }
    let constraints = inp.constraints;
    let beta_final = *opts.beta_schedule.last().unwrap_or(&1.0);
    let solver = build_solver(
        inp.system,
        vec![inp.agent],
        inp.t,
        inp.horizon,
        inp.trajectories.to_vec(),
        vec![inp.trajectories[inp.agent][inp.t].clone()],
        vec![inp.cost],
        &constraints,
        inp.omega,
        beta_final,
    )?;
    let incumbent_ok = solver.assess(&[inp.incumbent.clone()]).feasible;
    let mut result = solver.solve(&[inp.incumbent], opts);
    result.diagnostics.incumbent_feasible = Some(incumbent_ok);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mas::AgentDynamics;
    use crate::stl::Predicate;

    fn scalar_system(a: f64, b: f64, x0: f64) -> MasSystem {
        MasSystem::new(vec!["x1".into()], vec![AgentDynamics::scalar(a, b, x0)])
    }

    fn pred_ge(agent: AgentId, thresh: f64) -> StlFormula {
        StlFormula::Pred(Predicate::scalar(agent, 1.0, -thresh))
    }

    #[test]
    fn inactive_constraint_reduces_to_lq() {
        // predicate already satisfied at the initial state: the optimizer
        // returns the pure input-energy minimum v = 0
        let system = scalar_system(1.0, 1.0, 2.0);
        let constraints = vec![CliqueConstraint {
            members: vec![0],
            formula: pred_ge(0, 0.0),
            margin: 0.0,
            bound: 0.0,
            role: CliqueRole::Individual,
        }];
        let cost = AgentCost::input_energy(1, 1.0);
        let res =
            solve_centralized(&system, constraints, &[cost], 3, &SynthOptions::default())
                .unwrap();
        assert!(res.feasible);
        assert!(res.cost < 1e-8, "cost {}", res.cost);
        assert!(res.constraint_robustness[0] >= 2.0 - 1e-6);
    }

    #[test]
    fn reach_task_matches_hand_constructed_plan() {
        // F[1,2](x >= 5) from x0 = 0 with margin m: pushing to 5 + m at
        // t = 1 and coasting is feasible with cost (5 + m)^2
        let margin = 0.25;
        let system = scalar_system(1.0, 1.0, 0.0);
        let constraints = vec![CliqueConstraint {
            members: vec![0],
            formula: StlFormula::eventually(1, 2, pred_ge(0, 5.0)),
            margin,
            bound: 0.0,
            role: CliqueRole::Individual,
        }];
        let cost = AgentCost::input_energy(1, 1.0);
        let res = initial_plan(&system, 0, constraints, &cost, 2, &SynthOptions::default())
            .unwrap();
        assert!(res.feasible, "violations {:?}", res.violations);
        assert!(res.constraint_robustness[0] >= -1e-9);
        let hand_cost = (5.0 + margin) * (5.0 + margin);
        assert!(
            res.cost <= hand_cost + 1e-6,
            "cost {} exceeds hand-constructed {hand_cost}",
            res.cost
        );
        // exact robustness recomputed on the returned states
        let z1 = res.states[0][1][0].max(res.states[0][2][0]);
        assert!(z1 >= 5.0 + margin - 1e-6);
    }

    #[test]
    fn certified_bound_below_exact() {
        let system = scalar_system(1.0, 1.0, 0.0);
        let constraints = vec![CliqueConstraint {
            members: vec![0],
            formula: StlFormula::always(0, 3, pred_ge(0, -1.0)),
            margin: 0.1,
            bound: 0.0,
            role: CliqueRole::Individual,
        }];
        let cost = AgentCost::input_energy(1, 1.0);
        let res = initial_plan(&system, 0, constraints, &cost, 3, &SynthOptions::default())
            .unwrap();
        assert!(res.feasible);
        for (cert, exact) in res.diagnostics.certified.iter().zip(&res.constraint_robustness) {
            assert!(cert <= &(exact + 1e-9), "certified {cert} above exact {exact}");
        }
    }

    #[test]
    fn collaborative_only_agent_is_unconstrained() {
        let system = scalar_system(1.0, 1.0, 1.5);
        let cost = AgentCost::input_energy(1, 1.0);
        let res = initial_plan(&system, 0, vec![], &cost, 4, &SynthOptions::default()).unwrap();
        assert!(res.feasible);
        assert!(res.cost < 1e-10);
        assert!(res.inputs[0].iter().all(|v| v.amax() < 1e-6));
    }

    #[test]
    fn step_plan_rejects_nonpositive_omega() {
        let system = scalar_system(1.0, 1.0, 0.0);
        let trajs = vec![vec![DVector::from_element(1, 0.0); 4]];
        let cost = AgentCost::input_energy(1, 1.0);
        let inp = StepInputs {
            system: &system,
            agent: 0,
            t: 1,
            horizon: 3,
            cost: &cost,
            omega: 0.0,
            trajectories: &trajs,
            incumbent: vec![DVector::zeros(1); 2],
            constraints: vec![CliqueConstraint {
                members: vec![0],
                formula: pred_ge(0, 0.0),
                margin: 0.0,
                bound: 0.0,
                role: CliqueRole::Target,
            }],
        };
        assert!(matches!(
            step_plan(inp, &SynthOptions::default()),
            Err(SynthError::OmegaNonPositive(_))
        ));
    }

    #[test]
    fn step_plan_never_worse_than_feasible_incumbent() {
        // all previous robustness >= 0: retaining the incumbent is feasible
        // and the returned plan's merit cannot exceed the incumbent's
        let system = scalar_system(1.0, 1.0, 1.0);
        let horizon = 4;
        // incumbent: hold x at 1 throughout
        let trajs = vec![vec![DVector::from_element(1, 1.0); 5]];
        let incumbent = vec![DVector::zeros(1); 3];
        let cost = AgentCost::input_energy(1, 1.0);
        let constraints = vec![CliqueConstraint {
            members: vec![0],
            formula: StlFormula::always(0, 4, pred_ge(0, 0.5)),
            margin: 0.2,
            bound: 0.0,
            role: CliqueRole::Individual,
        }];
        let inp = StepInputs {
            system: &system,
            agent: 0,
            t: 1,
            horizon,
            cost: &cost,
            omega: 10.0,
            trajectories: &trajs,
            incumbent: incumbent.clone(),
            constraints,
        };
        let res = step_plan(inp, &SynthOptions::default()).unwrap();
        assert_eq!(res.diagnostics.incumbent_feasible, Some(true));
        assert!(res.feasible);
        // incumbent tail cost is zero; solver must return merit <= 0 + tol
        assert!(res.cost <= 1e-8, "cost {}", res.cost);
    }

    #[test]
    fn violated_target_clique_improves() {
        // two scalar agents must come within 0.5 of each other eventually;
        // agent 0 replans while agent 1 stays frozen far away at first
        let system = MasSystem::new(
            vec!["x1".into(), "x2".into()],
            vec![AgentDynamics::scalar(1.0, 1.0, 0.0), AgentDynamics::scalar(1.0, 1.0, 4.0)],
        );
        let horizon = 4;
        // proximity |x1 - x2| <= 0.5 eventually in [0,4]
        let near = StlFormula::And(vec![
            StlFormula::Pred(
                Predicate::new(
                    vec![0, 1],
                    nalgebra::DVector::from_vec(vec![-1.0, 1.0]),
                    0.5,
                )
                .unwrap(),
            ),
            StlFormula::Pred(
                Predicate::new(
                    vec![0, 1],
                    nalgebra::DVector::from_vec(vec![1.0, -1.0]),
                    0.5,
                )
                .unwrap(),
            ),
        ]);
        let formula = StlFormula::eventually(0, horizon, near);
        // both agents idle: distance stays 4, robustness = 0.5 - 4 < 0
        let trajs = vec![
            vec![DVector::from_element(1, 0.0); horizon + 1],
            vec![DVector::from_element(1, 4.0); horizon + 1],
        ];
        let prev = -3.5_f64;
        let inp = StepInputs {
            system: &system,
            agent: 0,
            t: 1,
            horizon,
            cost: &AgentCost::input_energy(1, 1.0),
            omega: 1000.0,
            trajectories: &trajs,
            incumbent: vec![DVector::zeros(1); 3],
            constraints: vec![CliqueConstraint {
                members: vec![0, 1],
                formula,
                margin: 0.0,
                bound: prev.min(0.0),
                role: CliqueRole::Target,
            }],
        };
        let res = step_plan(inp, &SynthOptions::default()).unwrap();
        assert!(res.feasible);
        // the improvement reward must push the clique robustness up from -3.5
        assert!(
            res.constraint_robustness[0] > prev + 1.0,
            "robustness {} did not improve",
            res.constraint_robustness[0]
        );
    }
}
