//! Alternating gain/weight training.
//!
//! The tail-risk objective `eta + (1/q_scale) sum (Y - eta)_+` is minimized
//! alternately over the disturbance-feedback gains (weights fixed) and the
//! prediction-region weights (gains fixed); both halves are linear programs.
//!
//! The gain program works in the closed-loop *response* parameterization
//! whenever every input matrix is square and invertible: the response rows
//! for different error coordinates are decoupled, which gives the LP solver
//! its block structure (one group per agent/time/coordinate). Otherwise the
//! gains enter directly and each agent forms one large group.

use nalgebra::DMatrix;

use super::cvar::cvar_with_scale;
use super::scores::WeightVector;
use super::UqError;
use crate::data::{
    build_error_set, DatasetSplit, DisturbanceDataset, SplitPart, TrajectoryNorm,
};
use crate::lp::{self, IpmOptions, LpProblem, SparseRow};
use crate::mas::{
    build_stacked, gains_from_response, AgentGains, CliqueSpec, FeedbackGains, InteractionGraph,
    MasSystem,
};

#[derive(Debug, Clone)]
pub struct TrainingOptions {
    pub tau_max: usize,
    pub theta: f64,
    pub norm: TrajectoryNorm,
    pub ipm: IpmOptions,
    /// L1 shrinkage on the feedback response coefficients. The tail
    /// objective alone is flat in thousands of directions that fit training
    /// noise and inflate fresh-sample error variance; shrinking toward the
    /// pure one-step feedthrough (the i.i.d.-variance optimum) removes the
    /// degeneracy at negligible in-sample cost.
    pub gain_shrinkage: f64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            tau_max: 4,
            theta: 0.05,
            norm: TrajectoryNorm::MaxInf,
            ipm: IpmOptions::default(),
            gain_shrinkage: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationObjectives {
    pub iteration: usize,
    pub after_gain_lp: f64,
    pub after_weight_lp: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub weights: WeightVector,
    pub gains: FeedbackGains,
    pub objective_trace: Vec<IterationObjectives>,
    pub theta_hat: f64,
    pub theta_hat_clamped: bool,
    pub q_scale: f64,
}

/// Tail quantile level used during training, `(1 + 1/(k_t - 1))(1 - theta)`
/// for `k_t` training samples, clamped to `(k_t - 1)/k_t` when the formula
/// exceeds one (small training sets make the level ill-posed).
pub fn training_level(theta: f64, training_count: usize) -> Result<(f64, bool), UqError> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(UqError::ThetaOutOfRange(theta));
    }
    if training_count < 2 {
        return Err(UqError::WeightsInvalid(format!(
            "training requires at least 2 samples, got {training_count}"
        )));
    }
    let kt = training_count as f64;
    let raw = (1.0 + 1.0 / (kt - 1.0)) * (1.0 - theta);
    if raw < 1.0 {
        Ok((raw, false))
    } else {
        Ok(((kt - 1.0) / kt, true))
    }
}

/// Tail scale `(k_t - 1)(1 - theta_hat)` of the training objective.
pub fn q_scale(theta_hat: f64, training_count: usize) -> f64 {
    (training_count as f64 - 1.0) * (1.0 - theta_hat)
}

/// Effective per-agent weight under the max-inf norm: because the inf-norm
/// of an aggregate is the max over members, `max_cliques C ||e_clique||` is
/// `max_agents D_i ||e_i||` with `D_i` the best weight among the agent's
/// cliques.
fn agent_weights(
    weights: &WeightVector,
    graph: &InteractionGraph,
) -> Vec<f64> {
    (0..graph.num_agents)
        .map(|i| {
            graph.memberships[i]
                .iter()
                .map(|&c| weights.values[c])
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Gain program for fixed weights: finds causal disturbance-feedback gains
/// minimizing the tail risk of the weighted error norms over the training
/// samples. Returns the gains and the LP objective value.
#[allow(clippy::too_many_arguments)]
pub fn solve_gain_lp(
    system: &MasSystem,
    horizon: usize,
    ds: &DisturbanceDataset,
    sample_indices: &[usize],
    weights: &WeightVector,
    graph: &InteractionGraph,
    q_scale: f64,
    norm: TrajectoryNorm,
    shrinkage: f64,
    ipm: &IpmOptions,
) -> Result<(FeedbackGains, f64), UqError> {
    if norm != TrajectoryNorm::MaxInf {
        return Err(UqError::NormUnsupported(
            "use the subgradient trainer for the 2-norm".into(),
        ));
    }
    let m_agents = system.num_agents();
    let n_s = sample_indices.len();
    let response_mode = system
        .agents
        .iter()
        .all(|a| a.input_dim() == a.state_dim() && a.b.clone().try_inverse().is_some());

    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut var = 0u32;
    // group variable start offsets; each gain variable gets an |.| epigraph
    // partner right after its block for the shrinkage term
    let mut response_start: Vec<Vec<Vec<u32>>> = Vec::new(); // [agent][t-2][d]
    let mut direct_start: Vec<u32> = Vec::new(); // [agent] -> base of its gain vars
    let mut direct_len: Vec<usize> = Vec::new();
    let mut abs_pairs: Vec<(u32, u32)> = Vec::new(); // (gain var, abs var)
    if response_mode {
        for agent in system.agents.iter() {
            let sd = agent.state_dim();
            let mut per_t = Vec::new();
            for t in 2..=horizon {
                let len = ((t - 1) * sd) as u32;
                let mut per_d = Vec::new();
                for _ in 0..sd {
                    per_d.push(var);
                    for k in 0..len {
                        abs_pairs.push((var + k, var + len + k));
                    }
                    groups.push((var..var + 2 * len).collect());
                    var += 2 * len;
                }
                per_t.push(per_d);
            }
            response_start.push(per_t);
        }
    } else {
        for agent in system.agents.iter() {
            let sd = agent.state_dim();
            let id = agent.input_dim();
            let len = ((horizon * (horizon - 1) / 2) * id * sd) as u32;
            direct_start.push(var);
            direct_len.push(len as usize);
            for k in 0..len {
                abs_pairs.push((var + k, var + len + k));
            }
            groups.push((var..var + 2 * len).collect());
            var += 2 * len;
        }
    }
    let eta = var;
    var += 1;
    let y0 = var;
    var += n_s as u32;
    let s0 = var;
    var += n_s as u32;
    let u0 = var;
    var += (m_agents * n_s) as u32;
    let num_vars = var as usize;
    let uvar = |i: usize, j: usize| u0 + (i * n_s + j) as u32;

    let mut rows: Vec<SparseRow> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    // direct mode needs the stacked operators for coefficients and constants
    let ops: Vec<_> = if response_mode {
        Vec::new()
    } else {
        system.agents.iter().map(|a| build_stacked(a, horizon)).collect()
    };
    // Gamma variable layout in direct mode: blocks (t,k), k < t, row-major
    let direct_var = |i: usize, t: usize, k: usize, p: usize, q: usize, sd: usize, id: usize| {
        let mut offset = 0usize;
        for tt in 1..t {
            offset += tt * id * sd;
        }
        offset += k * id * sd + p * sd + q;
        direct_start[i] + offset as u32
    };

    for (i, agent) in system.agents.iter().enumerate() {
        let sd = agent.state_dim();
        let id = agent.input_dim();
        for (j, &s_idx) in sample_indices.iter().enumerate() {
            let w_seq = ds.sample(i, s_idx);
            // t = 1: e(1) = w(0) is constant
            let base = w_seq[0].amax();
            rows.push(SparseRow::new(vec![uvar(i, j)], vec![1.0]));
            rhs.push(base);
            for t in 2..=horizon {
                for d in 0..sd {
                    let mut cols_plus = vec![uvar(i, j)];
                    let mut vals_plus = vec![1.0];
                    let mut constant = 0.0;
                    if response_mode {
                        let start = response_start[i][t - 2][d];
                        constant = w_seq[t - 1][d];
                        for c in 0..t - 1 {
                            for q in 0..sd {
                                cols_plus.push(start + (c * sd + q) as u32);
                                vals_plus.push(-w_seq[c][q]);
                            }
                        }
                    } else {
                        // e(t)[d] = (A_stack w)[row] + sum Gamma coeffs
                        let row_idx = (t - 1) * sd + d;
                        for (k, wk) in w_seq.iter().enumerate() {
                            for q in 0..sd {
                                constant +=
                                    ops[i].a_stack[(row_idx, k * sd + q)] * wk[q];
                            }
                        }
                        for tt in 1..t {
                            for k in 0..tt {
                                for p in 0..id {
                                    let b = ops[i].b_stack[(row_idx, tt * id + p)];
                                    if b == 0.0 {
                                        continue;
                                    }
                                    for q in 0..sd {
                                        let coeff = b * w_seq[k][q];
                                        if coeff != 0.0 {
                                            cols_plus.push(direct_var(i, tt, k, p, q, sd, id));
                                            vals_plus.push(-coeff);
                                        }
                                    }
                                }
                            }
                        }
                    }
                    // U - lin >= const  and  U + lin >= -const
                    let cols_minus = cols_plus.clone();
                    let vals_minus: Vec<f64> = vals_plus
                        .iter()
                        .enumerate()
                        .map(|(idx, &v)| if idx == 0 { v } else { -v })
                        .collect();
                    rows.push(SparseRow::new(cols_plus, vals_plus));
                    rhs.push(constant);
                    rows.push(SparseRow::new(cols_minus, vals_minus));
                    rhs.push(-constant);
                }
            }
        }
    }
    // Y >= D_i U_i, tail slack rows, nonnegativity
    let d_weights = agent_weights(weights, graph);
    for j in 0..n_s {
        for (i, &d_i) in d_weights.iter().enumerate() {
            if d_i > 0.0 {
                rows.push(SparseRow::new(
                    vec![y0 + j as u32, uvar(i, j)],
                    vec![1.0, -d_i],
                ));
                rhs.push(0.0);
            }
        }
        rows.push(SparseRow::new(
            vec![s0 + j as u32, y0 + j as u32, eta],
            vec![1.0, -1.0, 1.0],
        ));
        rhs.push(0.0);
        rows.push(SparseRow::new(vec![s0 + j as u32], vec![1.0]));
        rhs.push(0.0);
    }
    rows.push(SparseRow::new(vec![eta], vec![1.0]));
    rhs.push(0.0);
    // |.| epigraph rows for the shrinkage term
    for &(r, u) in &abs_pairs {
        rows.push(SparseRow::new(vec![u, r], vec![1.0, -1.0]));
        rhs.push(0.0);
        rows.push(SparseRow::new(vec![u, r], vec![1.0, 1.0]));
        rhs.push(0.0);
    }

    let mut objective = vec![0.0; num_vars];
    objective[eta as usize] = 1.0;
    for j in 0..n_s {
        objective[(s0 + j as u32) as usize] = 1.0 / q_scale;
    }
    for &(_, u) in &abs_pairs {
        objective[u as usize] = shrinkage;
    }

    let problem = LpProblem {
        num_vars,
        objective,
        rows,
        rhs,
        eq_rows: vec![],
        eq_rhs: vec![],
        groups,
    };
    let sol = lp::solve(&problem, ipm)?;
    // tail-risk part of the objective; the shrinkage term is a tie-breaker
    // and is excluded from the reported value
    let tail_objective = sol.x[eta as usize]
        + sol.x[s0 as usize..s0 as usize + n_s].iter().sum::<f64>() / q_scale;

    // extract gains
    let mut agents_gains = Vec::with_capacity(m_agents);
    for (i, agent) in system.agents.iter().enumerate() {
        let sd = agent.state_dim();
        let id = agent.input_dim();
        if response_mode {
            let mut h = DMatrix::zeros(horizon * sd, horizon * sd);
            for t in 1..=horizon {
                for d in 0..sd {
                    h[((t - 1) * sd + d, (t - 1) * sd + d)] = 1.0;
                    if t >= 2 {
                        let start = response_start[i][t - 2][d] as usize;
                        for c in 0..(t - 1) * sd {
                            h[((t - 1) * sd + d, c)] = sol.x[start + c];
                        }
                    }
                }
            }
            agents_gains.push(gains_from_response(agent, &h, horizon)?);
        } else {
            let mut g = AgentGains::zeros(horizon, id, sd);
            for t in 1..horizon {
                for k in 0..t {
                    let mut blk = DMatrix::zeros(id, sd);
                    for p in 0..id {
                        for q in 0..sd {
                            blk[(p, q)] =
                                sol.x[direct_var(i, t, k, p, q, sd, id) as usize];
                        }
                    }
                    g.set_block(t, k, &blk);
                }
            }
            agents_gains.push(g);
        }
    }
    Ok((FeedbackGains { agents: agents_gains }, tail_objective))
}

/// Weight program for fixed gains: optimizes the simplex weights against
/// precomputed per-clique norms. Always feasible (uniform weights).
pub fn solve_weight_lp(
    clique_norms: &[Vec<f64>],
    q_scale: f64,
    ipm: &IpmOptions,
) -> Result<(WeightVector, f64), UqError> {
    let n_cliques = clique_norms.len();
    if n_cliques == 0 {
        return Err(UqError::EmptyScores);
    }
    let n_s = clique_norms[0].len();
    let eta = 0u32;
    let y0 = 1u32;
    let s0 = y0 + n_s as u32;
    let c0 = s0 + n_s as u32;
    let num_vars = (c0 as usize) + n_cliques;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..n_s {
        for (c, norms) in clique_norms.iter().enumerate() {
            rows.push(SparseRow::new(
                vec![y0 + j as u32, c0 + c as u32],
                vec![1.0, -norms[j]],
            ));
            rhs.push(0.0);
        }
        rows.push(SparseRow::new(
            vec![s0 + j as u32, y0 + j as u32, eta],
            vec![1.0, -1.0, 1.0],
        ));
        rhs.push(0.0);
        rows.push(SparseRow::new(vec![s0 + j as u32], vec![1.0]));
        rhs.push(0.0);
    }
    rows.push(SparseRow::new(vec![eta], vec![1.0]));
    rhs.push(0.0);
    for c in 0..n_cliques {
        rows.push(SparseRow::new(vec![c0 + c as u32], vec![1.0]));
        rhs.push(0.0);
        rows.push(SparseRow::new(vec![c0 + c as u32], vec![-1.0]));
        rhs.push(-1.0);
    }
    let eq_rows = vec![SparseRow::new(
        (0..n_cliques).map(|c| c0 + c as u32).collect(),
        vec![1.0; n_cliques],
    )];
    let mut objective = vec![0.0; num_vars];
    objective[eta as usize] = 1.0;
    for j in 0..n_s {
        objective[(s0 + j as u32) as usize] = 1.0 / q_scale;
    }
    let problem = LpProblem {
        num_vars,
        objective,
        rows,
        rhs,
        eq_rows,
        eq_rhs: vec![1.0],
        groups: vec![],
    };
    let sol = lp::solve(&problem, ipm)?;
    let mut values: Vec<f64> =
        (0..n_cliques).map(|c| sol.x[(c0 + c as u32) as usize]).collect();
    // snap interior-point round-off onto the simplex
    for v in values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let sum: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v /= sum;
    }
    Ok((WeightVector::new(values)?, sol.objective))
}

/// Subgradient descent on the gain objective for the 2-norm path, where the
/// epigraph is no longer polyhedral. Works in the response parameterization.
fn train_gains_subgradient(
    system: &MasSystem,
    horizon: usize,
    ds: &DisturbanceDataset,
    sample_indices: &[usize],
    weights: &WeightVector,
    cliques: &[CliqueSpec],
    q_scale: f64,
    iters: usize,
) -> Result<(FeedbackGains, f64), UqError> {
    for a in &system.agents {
        if a.input_dim() != a.state_dim() || a.b.clone().try_inverse().is_none() {
            return Err(UqError::NormUnsupported(
                "2-norm gain training needs square invertible input matrices".into(),
            ));
        }
    }
    let m_agents = system.num_agents();
    let dims: Vec<usize> = system.agents.iter().map(|a| a.state_dim()).collect();
    // r[i] holds rows for t=2..=N, each (t-1)*sd coefficients per coordinate
    let size =
        |i: usize| -> usize { (2..=horizon).map(|t| (t - 1) * dims[i] * dims[i]).sum() };
    let offset = |i: usize, t: usize, d: usize| -> usize {
        let mut off = 0;
        for tt in 2..t {
            off += (tt - 1) * dims[i] * dims[i];
        }
        off + d * (t - 1) * dims[i]
    };
    let mut r: Vec<Vec<f64>> = (0..m_agents).map(|i| vec![0.0; size(i)]).collect();
    let eval = |r: &[Vec<f64>]| -> (f64, Vec<Vec<f64>>) {
        // errors e_i^{(j)}(t) and scores
        let mut grads: Vec<Vec<f64>> = r.iter().map(|v| vec![0.0; v.len()]).collect();
        let n_s = sample_indices.len();
        let mut errors: Vec<Vec<Vec<nalgebra::DVector<f64>>>> = Vec::with_capacity(m_agents);
        for i in 0..m_agents {
            let sd = dims[i];
            let mut per_sample = Vec::with_capacity(n_s);
            for &s_idx in sample_indices {
                let w_seq = ds.sample(i, s_idx);
                let mut traj = Vec::with_capacity(horizon);
                traj.push(w_seq[0].clone());
                for t in 2..=horizon {
                    let mut e = w_seq[t - 1].clone();
                    for d in 0..sd {
                        let base = offset(i, t, d);
                        let mut acc = 0.0;
                        for c in 0..t - 1 {
                            for q in 0..sd {
                                acc += r[i][base + c * sd + q] * w_seq[c][q];
                            }
                        }
                        e[d] += acc;
                    }
                    traj.push(e);
                }
                per_sample.push(traj);
            }
            errors.push(per_sample);
        }
        let mut scores = Vec::with_capacity(n_s);
        let mut active: Vec<(usize, usize)> = Vec::with_capacity(n_s); // (clique, time)
        for j in 0..n_s {
            let mut best = 0.0f64;
            let mut arg = (0, 0);
            for (ci, clique) in cliques.iter().enumerate() {
                if weights.values[ci] == 0.0 {
                    continue;
                }
                for t in 0..horizon {
                    let sq: f64 = clique
                        .members
                        .iter()
                        .map(|&m| errors[m][j][t].norm_squared())
                        .sum();
                    let v = weights.values[ci] * sq.sqrt();
                    if v > best {
                        best = v;
                        arg = (ci, t);
                    }
                }
            }
            scores.push(best);
            active.push(arg);
        }
        let obj = cvar_with_scale(&scores, q_scale);
        // eta* from the scan; subgradient from samples above it
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let eta = {
            let mut best_eta = sorted[0];
            let mut best_val = f64::INFINITY;
            for &cand in &sorted {
                let acc: f64 = scores.iter().map(|&s| (s - cand).max(0.0)).sum();
                let v = cand + acc / q_scale;
                if v < best_val {
                    best_val = v;
                    best_eta = cand;
                }
            }
            best_eta
        };
        for (j, &score) in scores.iter().enumerate() {
            if score <= eta || score == 0.0 {
                continue;
            }
            let (ci, t) = active[j];
            let clique = &cliques[ci];
            let c_w = weights.values[ci];
            let agg_norm = score / c_w;
            if t == 0 {
                continue; // e(1) = w(0) has no gain dependence
            }
            for &m in &clique.members {
                let e = &errors[m][j][t];
                let w_seq = ds.sample(m, sample_indices[j]);
                let sd = dims[m];
                for d in 0..sd {
                    let chain = (c_w / q_scale) * e[d] / agg_norm;
                    if chain == 0.0 {
                        continue;
                    }
                    let base = offset(m, t + 1, d);
                    for c in 0..t {
                        for q in 0..sd {
                            grads[m][base + c * sd + q] += chain * w_seq[c][q];
                        }
                    }
                }
            }
        }
        (obj, grads)
    };
    let (mut best_obj, _) = eval(&r);
    let mut best_r = r.clone();
    let mut step = 0.5;
    for k in 0..iters {
        let (_, grads) = eval(&r);
        let gnorm: f64 = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if gnorm < 1e-12 {
            break;
        }
        let alpha = step / (1.0 + k as f64).sqrt() / gnorm;
        for (ri, gi) in r.iter_mut().zip(&grads) {
            for (rv, gv) in ri.iter_mut().zip(gi) {
                *rv -= alpha * gv;
            }
        }
        let (obj, _) = eval(&r);
        if obj < best_obj {
            best_obj = obj;
            best_r = r.clone();
        } else if k % 20 == 19 {
            step *= 0.7;
        }
    }
    // convert best response to gains
    let mut agents_gains = Vec::with_capacity(m_agents);
    for (i, agent) in system.agents.iter().enumerate() {
        let sd = dims[i];
        let mut h = DMatrix::zeros(horizon * sd, horizon * sd);
        for t in 1..=horizon {
            for d in 0..sd {
                h[((t - 1) * sd + d, (t - 1) * sd + d)] = 1.0;
                if t >= 2 {
                    let base = offset(i, t, d);
                    for c in 0..(t - 1) * sd {
                        h[((t - 1) * sd + d, c)] = best_r[i][base + c];
                    }
                }
            }
        }
        agents_gains.push(gains_from_response(agent, &h, horizon)?);
    }
    Ok((FeedbackGains { agents: agents_gains }, best_obj))
}

/// Block-coordinate descent alternating the gain and weight programs from
/// the prescribed start (uniform weight on singleton cliques).
pub fn alternating_descent(
    system: &MasSystem,
    horizon: usize,
    ds: &DisturbanceDataset,
    split: &DatasetSplit,
    cliques: &[CliqueSpec],
    graph: &InteractionGraph,
    opts: &TrainingOptions,
) -> Result<TrainingOutcome, UqError> {
    assert!(opts.tau_max >= 1, "tau_max must be at least 1");
    let indices = split.indices(SplitPart::Training);
    let (theta_hat, clamped) = training_level(opts.theta, indices.len())?;
    let scale = q_scale(theta_hat, indices.len());
    let collaborative: Vec<bool> = cliques.iter().map(|c| c.is_collaborative()).collect();
    let mut weights = WeightVector::initial(&collaborative);
    let mut gains = None;
    let mut trace = Vec::with_capacity(opts.tau_max);
    for tau in 1..=opts.tau_max {
        let (g, obj_gain) = match opts.norm {
            TrajectoryNorm::MaxInf => solve_gain_lp(
                system,
                horizon,
                ds,
                &indices,
                &weights,
                graph,
                scale,
                opts.norm,
                opts.gain_shrinkage,
                &opts.ipm,
            )?,
            TrajectoryNorm::MaxL2 => train_gains_subgradient(
                system,
                horizon,
                ds,
                &indices,
                &weights,
                cliques,
                scale,
                150,
            )?,
        };
        let errors = build_error_set(
            system,
            ds,
            split,
            SplitPart::Training,
            &g,
            cliques,
            opts.norm,
        )?;
        let (w, obj_weight) = solve_weight_lp(&errors.clique_norms, scale, &opts.ipm)?;
        weights = w;
        gains = Some(g);
        trace.push(IterationObjectives {
            iteration: tau,
            after_gain_lp: obj_gain,
            after_weight_lp: obj_weight,
        });
    }
    Ok(TrainingOutcome {
        weights,
        gains: gains.expect("tau_max >= 1"),
        objective_trace: trace,
        theta_hat,
        theta_hat_clamped: clamped,
        q_scale: scale,
    })
}
