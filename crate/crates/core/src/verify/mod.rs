//! Monte-Carlo verification: satisfaction rates with Wilson intervals,
//! conformal coverage experiments and the analytic union-bound baseline.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::TrajectoryNorm;
use crate::mas::{build_stacked, response_matrix, CliqueSpec, FeedbackGains, InteractionGraph, MasSystem};
use crate::runtime::{run_closed_loop, ClosedLoopTrace, RuntimeError, RuntimeOptions};
use crate::synth::AgentCost;
use crate::uq::{conformal_quantile, pac_adjusted_level, UqError, WeightVector};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("target probability {requested} unreachable; at most {achievable} at the radius cap")]
    TargetUnreachable { requested: f64, achievable: f64 },
    #[error("target probability must lie in (0,1), got {0}")]
    BadTarget(f64),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let spread = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    (((center - spread) / denom).max(0.0), ((center + spread) / denom).min(1.0))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct McReport {
    pub runs: usize,
    pub satisfied: usize,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Exact global robustness of each run.
    pub robustness: Vec<f64>,
    /// Whether the realized error trajectory scored inside the calibrated
    /// region (`E <= q`), per run.
    pub containment: Vec<bool>,
    pub containment_rate: f64,
    pub flagged_runs: usize,
    pub selection_counts: Vec<usize>,
}

impl McReport {
    pub fn meets(&self, target_rate: f64) -> bool {
        self.wilson_low >= target_rate
    }
}

/// Per-run data needed by callers that inspect individual trajectories.
pub struct McRun {
    pub trace: ClosedLoopTrace,
    pub contained: bool,
    pub score: f64,
}

/// Everything the closed loop needs, bundled to keep signatures sane.
pub struct McInputs<'a> {
    pub system: &'a MasSystem,
    pub cliques: &'a [CliqueSpec],
    pub graph: &'a InteractionGraph,
    pub margins: &'a [f64],
    pub gains: &'a FeedbackGains,
    pub weights: &'a WeightVector,
    pub quantile: f64,
    pub costs: &'a [AgentCost],
    pub initial_inputs: &'a [Vec<DVector<f64>>],
    pub initial_states: &'a [Vec<DVector<f64>>],
    pub horizon: usize,
    pub sigma2: f64,
    pub ar1: f64,
    pub norm: TrajectoryNorm,
}

/// Draws one fresh disturbance realization per run, executes the closed
/// loop, and reports the satisfaction rate with its Wilson interval.
///
/// Fresh realizations are independent of training and calibration by
/// construction (they are generated from `seed`, never from the dataset).
pub fn monte_carlo_satisfaction(
    inputs: &McInputs<'_>,
    opts: &RuntimeOptions,
    n_runs: usize,
    seed: u64,
) -> Result<(McReport, Vec<McRun>), VerifyError> {
    let dims: Vec<usize> = inputs.system.agents.iter().map(|a| a.state_dim()).collect();
    let ops: Vec<_> =
        inputs.system.agents.iter().map(|a| build_stacked(a, inputs.horizon)).collect();
    let mut runs = Vec::with_capacity(n_runs);
    let mut satisfied = 0;
    let mut flagged_runs = 0;
    let mut selection_counts = vec![0usize; inputs.system.num_agents()];
    for run_idx in 0..n_runs {
        let run_seed = seed.wrapping_add(run_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let ds = crate::data::generate_gaussian_ar1(
            &dims,
            inputs.horizon,
            inputs.sigma2,
            inputs.ar1,
            1,
            run_seed,
        );
        let realization: Vec<Vec<DVector<f64>>> =
            (0..dims.len()).map(|i| ds.sample(i, 0).to_vec()).collect();
        let trace = run_closed_loop(
            inputs.system,
            inputs.cliques,
            inputs.graph,
            inputs.margins,
            inputs.gains,
            inputs.costs,
            inputs.initial_inputs,
            inputs.initial_states,
            &realization,
            inputs.horizon,
            opts,
        )?;
        // score the realized full-horizon error trajectory like a test point
        let mut score = 0.0f64;
        for (ci, clique) in inputs.cliques.iter().enumerate() {
            let c = inputs.weights.values[ci];
            if c == 0.0 {
                continue;
            }
            let clique_norm: f64 = clique
                .members
                .iter()
                .map(|&mm| {
                    let e = crate::mas::error_trajectory(
                        &ops[mm],
                        &inputs.gains.agents[mm],
                        &realization[mm],
                    )
                    .expect("realization matches horizon");
                    inputs.norm.of(&e)
                })
                .fold(0.0, f64::max);
            score = score.max(c * clique_norm);
        }
        let contained = score <= inputs.quantile;
        if trace.verdict {
            satisfied += 1;
        }
        if trace.flagged {
            flagged_runs += 1;
        }
        for (i, &c) in trace.selection_counts.iter().enumerate() {
            selection_counts[i] += c;
        }
        runs.push(McRun { trace, contained, score });
    }
    let (lo, hi) = wilson_interval(satisfied, n_runs, 1.96);
    let contained_count = runs.iter().filter(|r| r.contained).count();
    let report = McReport {
        runs: n_runs,
        satisfied,
        rate: satisfied as f64 / n_runs.max(1) as f64,
        wilson_low: lo,
        wilson_high: hi,
        robustness: runs.iter().map(|r| r.trace.robustness).collect(),
        containment: runs.iter().map(|r| r.contained).collect(),
        containment_rate: contained_count as f64 / n_runs.max(1) as f64,
        flagged_runs,
        selection_counts,
    };
    Ok((report, runs))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub k1: usize,
    pub theta: f64,
    /// Level actually used for the quantile (tightened in PAC mode).
    pub level: f64,
    pub rank: usize,
    /// Fraction of trials whose fresh test point fell inside the region.
    pub indicator_rate: f64,
    /// Exact per-trial conditional coverage (distribution known).
    pub conditional: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Reference Beta(rank, k1 + 1 - rank) moments for the conditional
    /// coverage of a continuous score distribution.
    pub beta_mean: f64,
    pub beta_variance: f64,
    /// PAC mode: fraction of trials with conditional coverage >= 1 - theta.
    pub pac_fraction: Option<f64>,
    pub warning: Option<String>,
}

/// Repeated split-conformal calibration on uniform scores. Uniformity makes
/// the per-trial conditional coverage analytic (the cdf of the computed
/// quantile), so marginal and conditional behavior are both measured
/// exactly.
pub fn coverage_experiment_uniform(
    theta: f64,
    k1: usize,
    n_trials: usize,
    seed: u64,
    pac_beta: Option<f64>,
) -> Result<CoverageReport, UqError> {
    let level = match pac_beta {
        Some(beta) => pac_adjusted_level(theta, beta, k1)?,
        None => theta,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conditional = Vec::with_capacity(n_trials);
    let mut hits = 0usize;
    for _ in 0..n_trials {
        let scores: Vec<f64> = (0..k1).map(|_| rng.random::<f64>()).collect();
        let q = conformal_quantile(&scores, level)?;
        let test: f64 = rng.random();
        if test <= q {
            hits += 1;
        }
        conditional.push(q.clamp(0.0, 1.0));
    }
    let mean = conditional.iter().sum::<f64>() / n_trials.max(1) as f64;
    let variance = conditional.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
        / (n_trials.max(2) - 1) as f64;
    let rank = (((k1 + 1) as f64 * (1.0 - level)) - 1e-9).ceil() as usize;
    let (alpha, beta) = (rank as f64, (k1 + 1 - rank.min(k1)) as f64);
    let beta_mean = alpha / (alpha + beta);
    let beta_variance = alpha * beta / ((alpha + beta).powi(2) * (alpha + beta + 1.0));
    let pac_fraction = pac_beta.map(|_| {
        conditional.iter().filter(|&&c| c >= 1.0 - theta).count() as f64 / n_trials as f64
    });
    let warning = (n_trials < 30)
        .then(|| format!("only {n_trials} trials; marginal estimate unreliable"));
    Ok(CoverageReport {
        trials: n_trials,
        k1,
        theta,
        level,
        rank,
        indicator_rate: hits as f64 / n_trials.max(1) as f64,
        conditional,
        mean,
        variance,
        beta_mean,
        beta_variance,
        pac_fraction,
        warning,
    })
}

/// Per-event tail model for the union-bound baseline.
///
/// `Exact` inverts true Gaussian tails (what this pipeline could do knowing
/// the distribution); `Conservative` uses closed-form concentration bounds
/// (chi-square Chernoff for vector norms), reconstructing the conservatism
/// of analytic union-bound pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TailBound {
    Exact,
    Conservative,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct UnionBoundReport {
    pub radius: f64,
    pub target: f64,
    pub events: usize,
    pub tail: TailBound,
}

/// Radius `r` such that the union bound over all agents and steps puts
/// `P(||e_i(t)||_2 <= r for all i, t) >= target` for Gaussian disturbances
/// of known variance, under the closed-loop error response of `gains`.
pub fn union_bound_radius(
    system: &MasSystem,
    gains: &FeedbackGains,
    horizon: usize,
    sigma2: f64,
    target: f64,
    tail: TailBound,
    max_radius: Option<f64>,
) -> Result<UnionBoundReport, VerifyError> {
    if !(0.0..1.0).contains(&target) || target == 0.0 {
        return Err(VerifyError::BadTarget(target));
    }
    // per (agent, step): worst per-coordinate standard deviation of e_i(t)
    let mut events: Vec<(usize, f64)> = Vec::new(); // (dim, sigma_max)
    for (agent, dynamics) in system.agents.iter().enumerate() {
        let sd = dynamics.state_dim();
        let ops = build_stacked(dynamics, horizon);
        let h = response_matrix(&ops, &gains.agents[agent]);
        for t in 0..horizon {
            let mut smax: f64 = 0.0;
            for d in 0..sd {
                let row = h.row(t * sd + d);
                smax = smax.max(sigma2.sqrt() * row.norm());
            }
            events.push((sd, smax));
        }
    }
    let budget = 1.0 - target;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let miss = |r: f64| -> f64 {
        events
            .iter()
            .map(|&(dim, smax)| {
                if smax == 0.0 {
                    return 0.0;
                }
                if dim == 1 {
                    let z = r / smax;
                    match tail {
                        TailBound::Exact => 2.0 * (1.0 - normal.cdf(z)),
                        TailBound::Conservative => (-0.5 * z * z).exp(),
                    }
                } else {
                    let x = (r / smax).powi(2);
                    match tail {
                        TailBound::Exact => {
                            let chi = ChiSquared::new(dim as f64).unwrap();
                            1.0 - chi.cdf(x)
                        }
                        TailBound::Conservative => {
                            // Chernoff bound on the chi-square tail, valid
                            // for x >= dim
                            let df = dim as f64;
                            if x <= df {
                                1.0
                            } else {
                                ((x / df) * (1.0 - x / df).exp()).powf(df / 2.0)
                            }
                        }
                    }
                }
            })
            .map(|p: f64| p.min(1.0))
            .sum()
    };
    // bisection on the radius
    let mut lo = 0.0f64;
    let mut hi = 1e-3;
    while miss(hi) > budget && hi < 1e12 {
        hi *= 2.0;
    }
    if hi >= 1e12 {
        return Err(VerifyError::TargetUnreachable { requested: target, achievable: 0.0 });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if miss(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let radius = hi;
    if let Some(cap) = max_radius {
        if radius > cap {
            let achievable = (1.0 - miss(cap)).max(0.0);
            return Err(VerifyError::TargetUnreachable { requested: target, achievable });
        }
    }
    Ok(UnionBoundReport { radius, target, events: events.len(), tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mas::AgentDynamics;

    #[test]
    fn wilson_interval_brackets_rate() {
        let (lo, hi) = wilson_interval(97, 100, 1.96);
        assert!(lo < 0.97 && 0.97 < hi);
        assert!(lo > 0.90 && hi < 1.0);
        let (lo0, hi0) = wilson_interval(0, 10, 1.96);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0);
    }

    #[test]
    fn single_step_scalar_radius_is_z_quantile() {
        let system =
            MasSystem::new(vec!["x1".into()], vec![AgentDynamics::scalar(1.0, 1.0, 0.0)]);
        let gains = FeedbackGains::zeros(&[(1, 1)], 1);
        let sigma2 = 0.25;
        let report = union_bound_radius(
            &system,
            &gains,
            1,
            sigma2,
            0.70,
            TailBound::Exact,
            None,
        )
        .unwrap();
        // single scalar event: 2 Phi-bar(r/sigma) = 0.30
        let normal = Normal::new(0.0, 1.0).unwrap();
        let z = normal.inverse_cdf(1.0 - 0.15);
        assert!((report.radius - 0.5 * z).abs() < 1e-6, "radius {}", report.radius);
    }

    #[test]
    fn union_over_steps_grows() {
        let system =
            MasSystem::new(vec!["x1".into()], vec![AgentDynamics::scalar(0.0, 1.0, 0.0)]);
        // A = 0 keeps every step's error at one-step noise
        let one = union_bound_radius(
            &system,
            &FeedbackGains::zeros(&[(1, 1)], 1),
            1,
            0.05,
            0.70,
            TailBound::Exact,
            None,
        )
        .unwrap();
        let hundred = union_bound_radius(
            &system,
            &FeedbackGains::zeros(&[(1, 1)], 100),
            100,
            0.05,
            0.70,
            TailBound::Exact,
            None,
        )
        .unwrap();
        assert!(hundred.radius > one.radius);
    }

    #[test]
    fn unreachable_target_reports_achievable() {
        let system =
            MasSystem::new(vec!["x1".into()], vec![AgentDynamics::scalar(0.0, 1.0, 0.0)]);
        let err = union_bound_radius(
            &system,
            &FeedbackGains::zeros(&[(1, 1)], 10),
            10,
            0.05,
            0.95,
            TailBound::Conservative,
            Some(0.3),
        )
        .unwrap_err();
        match err {
            VerifyError::TargetUnreachable { requested, achievable } => {
                assert_eq!(requested, 0.95);
                assert!(achievable < 0.95);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coverage_experiment_hits_textbook_band() {
        let report = coverage_experiment_uniform(0.05, 19, 2000, 42, None).unwrap();
        assert_eq!(report.rank, 19);
        // marginal coverage of the max-of-19 rule is exactly 0.95
        let sigma = (0.95f64 * 0.05 / 2000.0).sqrt();
        assert!(report.indicator_rate >= 0.95 - 3.0 * sigma);
        assert!(report.indicator_rate <= 1.0);
        assert!((report.beta_mean - 0.95).abs() < 1e-12);
    }

    #[test]
    fn single_trial_warns() {
        let report = coverage_experiment_uniform(0.05, 19, 1, 1, None).unwrap();
        assert!(report.warning.is_some());
    }
}
