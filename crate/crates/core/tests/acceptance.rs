//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (visible with `--nocapture`). Criteria 7-10 share
//! one trained/calibrated/verified benchmark pipeline.

mod common;

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DVector;
use stlmas_core::config::{self, Scenario};
use stlmas_core::data::{generate_gaussian, DatasetSplit, SplitPart, TrajectoryNorm};
use stlmas_core::mas::{
    build_stacked, error_trajectory, nominal_trajectory, simulate_closed_loop, CliqueSpec,
    InteractionGraph, MasSystem,
};
use stlmas_core::pipeline;
use stlmas_core::report::{GainsArtifact, RegionsArtifact, VerifyArtifact};
use stlmas_core::runtime::ExecutionMode;
use stlmas_core::stl::{
    eval_boolean, eval_robustness, lipschitz_constant, smooth_robustness, StlFormula, VectorNorm,
};
use stlmas_core::uq::{
    cvar_with_scale, empirical_cvar, empirical_var, score_dataset, solve_gain_lp, solve_weight_lp,
    WeightVector,
};
use stlmas_core::verify::{coverage_experiment_uniform, McReport, McRun};

use rand::prelude::*;

fn trio_config_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/trio.toml"))
}

struct Benchmark {
    scenario: Scenario,
    gains: GainsArtifact,
    regions: RegionsArtifact,
    verify: VerifyArtifact,
    mc: McReport,
    runs: Vec<McRun>,
}

static BENCHMARK: OnceLock<Benchmark> = OnceLock::new();

fn benchmark() -> &'static Benchmark {
    BENCHMARK.get_or_init(|| {
        let scenario = config::load(trio_config_path()).expect("benchmark scenario parses");
        let ds = pipeline::generate_dataset(&scenario);
        let gains = pipeline::train(&scenario, &ds).expect("training succeeds");
        let regions =
            pipeline::calibrate(&scenario, &ds, &gains, None).expect("calibration succeeds");
        let output =
            pipeline::verify(&scenario, &gains, &regions, 500, ExecutionMode::Distributed)
                .expect("verification succeeds");
        Benchmark {
            scenario,
            gains,
            regions,
            verify: output.artifact,
            mc: output.mc,
            runs: output.runs,
        }
    })
}

#[test]
fn criterion_1_marginal_coverage() {
    // k1 = 19, theta = 0.05, 2000 fresh calibration + test draws
    let report = coverage_experiment_uniform(0.05, 19, 2000, 42, None).unwrap();
    let sigma = (0.95_f64 * 0.05 / 2000.0).sqrt();
    let lower = 0.95 - 3.0 * sigma;
    let upper = 0.95 + 1.0 / 20.0 + 3.0 * sigma;
    assert!(
        report.indicator_rate >= lower && report.indicator_rate <= upper.min(1.0),
        "marginal coverage {} outside [{lower}, {upper}]",
        report.indicator_rate
    );
    println!(
        "criterion 1 (marginal coverage): PASS - empirical {:.4} in [{:.4}, {:.4}]",
        report.indicator_rate,
        lower,
        upper.min(1.0)
    );
}

#[test]
fn criterion_2_conditional_coverage_beta() {
    let report = coverage_experiment_uniform(0.05, 19, 2000, 42, None).unwrap();
    // conditional coverage of the rank-19 rule is Beta(19, 1)
    assert_eq!(report.rank, 19);
    let mean_err = (report.mean - report.beta_mean).abs();
    assert!(
        mean_err <= 0.01 * report.beta_mean,
        "conditional mean {:.5} vs Beta mean {:.5}",
        report.mean,
        report.beta_mean
    );
    let var_err = (report.variance - report.beta_variance).abs();
    assert!(
        var_err <= 0.10 * report.beta_variance,
        "conditional variance {:.6} vs Beta variance {:.6}",
        report.variance,
        report.beta_variance
    );
    println!(
        "criterion 2 (conditional coverage): PASS - mean {:.4} (ref {:.4}), var {:.6} (ref {:.6})",
        report.mean, report.beta_mean, report.variance, report.beta_variance
    );
}

#[test]
fn criterion_3_cvar_dominates_var() {
    let mut rng = common::rng(2024);
    // brute-force eta scan oracle, naive double loop
    let oracle = |scores: &[f64], theta: f64| -> f64 {
        let n = scores.len() as f64;
        scores
            .iter()
            .map(|&eta| {
                eta + scores.iter().map(|&s| (s - eta).max(0.0)).sum::<f64>() / (n * theta)
            })
            .fold(f64::INFINITY, f64::min)
    };
    for trial in 0..1000 {
        let n = rng.random_range(3..60);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let theta = rng.random_range(0.05..0.95);
        let var = empirical_var(&scores, theta).unwrap();
        let cvar = empirical_cvar(&scores, theta).unwrap();
        assert!(cvar >= var - 1e-12, "trial {trial}: cvar {cvar} < var {var}");
        assert!(
            (cvar - oracle(&scores, theta)).abs() <= 1e-9,
            "trial {trial}: cvar {cvar} vs oracle"
        );
    }
    // degenerate distribution: equality
    let flat = vec![2.5; 40];
    assert_eq!(empirical_cvar(&flat, 0.3).unwrap(), 2.5);
    assert_eq!(empirical_var(&flat, 0.3).unwrap(), 2.5);
    println!("criterion 3 (CVaR >= VaR + eta-scan oracle): PASS - 1000 random sets");
}

#[test]
fn criterion_4_lp_objectives_match_cvar() {
    use stlmas_core::data::{build_error_set, DisturbanceDataset};
    use stlmas_core::lp::IpmOptions;
    use stlmas_core::mas::AgentDynamics;
    // gain program on a random two-agent instance
    let system = MasSystem::new(
        vec!["x1".into(), "x2".into()],
        vec![AgentDynamics::scalar(1.0, 1.0, 0.0), AgentDynamics::scalar(0.7, 1.0, 0.0)],
    );
    let cliques = vec![
        CliqueSpec::new(vec![0], StlFormula::True).unwrap(),
        CliqueSpec::new(vec![1], StlFormula::True).unwrap(),
        CliqueSpec::new(vec![0, 1], StlFormula::True).unwrap(),
    ];
    let graph = InteractionGraph::build(&cliques, 2).unwrap();
    let ds: DisturbanceDataset = generate_gaussian(&[1, 1], 6, 0.05, 16, 99);
    let split = DatasetSplit::new(4, 16).unwrap();
    let indices = split.indices(SplitPart::Training);
    let weights = WeightVector::new(vec![0.4, 0.3, 0.3]).unwrap();
    let scale = 5.5;
    let (gains, obj) = solve_gain_lp(
        &system,
        6,
        &ds,
        &indices,
        &weights,
        &graph,
        scale,
        TrajectoryNorm::MaxInf,
        1e-4,
        &IpmOptions::default(),
    )
    .unwrap();
    let errors = build_error_set(
        &system,
        &ds,
        &split,
        SplitPart::Training,
        &gains,
        &cliques,
        TrajectoryNorm::MaxInf,
    )
    .unwrap();
    let scores = score_dataset(&errors, &weights).unwrap();
    let cvar = cvar_with_scale(&scores.values, scale);
    assert!(
        (obj - cvar).abs() < 1e-6,
        "gain LP objective {obj} vs score CVaR {cvar}"
    );
    // weight program on the same norms
    let (w2, obj2) = solve_weight_lp(&errors.clique_norms, scale, &IpmOptions::default()).unwrap();
    let scores2 = score_dataset(&errors, &w2).unwrap();
    let cvar2 = cvar_with_scale(&scores2.values, scale);
    assert!(
        (obj2 - cvar2).abs() < 1e-6,
        "weight LP objective {obj2} vs score CVaR {cvar2}"
    );
    // hand-checked two-clique instance: constant norms (1, 3)
    let norms = vec![vec![1.0; 5], vec![3.0; 5]];
    let (w, obj3) = solve_weight_lp(&norms, 2.0, &IpmOptions::default()).unwrap();
    assert!((w.values[0] - 0.75).abs() < 1e-9, "weights {:?}", w.values);
    assert!((w.values[1] - 0.25).abs() < 1e-9);
    assert!((obj3 - 0.75).abs() < 1e-7);
    println!(
        "criterion 4 (LP/CVaR identities): PASS - gain {obj:.8} vs {cvar:.8}, weight {obj2:.8} vs {cvar2:.8}, hand C = (0.75, 0.25)"
    );
}

#[test]
fn criterion_5_decomposition_exactness() {
    let mut rng = common::rng(505);
    for trial in 0..1000 {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(1..=8);
        let agent = common::random_agent(&mut rng, dim);
        let gains = common::random_gains(&mut rng, n, dim);
        let w = common::random_disturbances(&mut rng, n, dim);
        let v: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        // disturbed closed loop under the feedback law
        let (x, _) = simulate_closed_loop(&agent, &gains, &v, &w);
        // nominal/error decomposition
        let z = nominal_trajectory(&agent, &v);
        let ops = build_stacked(&agent, n);
        let e = error_trajectory(&ops, &gains, &w).unwrap();
        assert!((&x[0] - &z[0]).amax() < 1e-12);
        for t in 1..=n {
            let recomposed = &z[t] + &e[t - 1];
            assert!(
                (&x[t] - recomposed).amax() < 1e-10,
                "trial {trial}, t={t}: decomposition broke"
            );
        }
        // stacked operator vs recursive error dynamics
        let mut e_rec = DVector::zeros(dim);
        for t in 0..n {
            let mut feed = DVector::zeros(dim);
            for k in 0..t {
                feed += gains.block(t, k) * &w[k];
            }
            e_rec = &agent.a * &e_rec + &agent.b * feed + &w[t];
            assert!(
                (&e_rec - &e[t]).amax() < 1e-12,
                "trial {trial}, t={t}: stacked operator mismatch"
            );
        }
    }
    println!("criterion 5 (decomposition exactness): PASS - 1000 random instances");
}

#[test]
fn criterion_6_stl_semantics() {
    // sign-soundness over 10^4 random formula/trace pairs
    let mut rng = common::rng(606);
    let mut checked = 0;
    while checked < 10_000 {
        let f = common::random_formula(&mut rng, 4);
        let horizon = f.horizon();
        if horizon > 14 {
            continue;
        }
        let extra = rng.random_range(0..3);
        let tr = common::random_trace(&mut rng, horizon + 1 + extra);
        let rho = eval_robustness(&f, &tr, 0).unwrap();
        if rho.abs() < 1e-12 || rho.is_infinite() {
            continue;
        }
        let sat = eval_boolean(&f, &tr, 0).unwrap();
        assert_eq!(rho > 0.0, sat, "sign-soundness broke: rho={rho}, formula {f:?}");
        checked += 1;
    }
    // smoothed gradients against central finite differences
    let mut grad_checked = 0;
    while grad_checked < 60 {
        let f = common::random_formula(&mut rng, 3);
        let horizon = f.horizon();
        if horizon > 10 {
            continue;
        }
        let len = horizon + 2;
        let vals: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tr = common::random_trace_from(&vals);
        let beta = rng.random_range(1.0..8.0);
        let (_, g) = smooth_robustness(&f, &tr, 0, beta).unwrap();
        let h = 1e-5;
        for k in 0..len {
            let mut up = vals.clone();
            up[k] += h;
            let mut dn = vals.clone();
            dn[k] -= h;
            let (vu, _) = smooth_robustness(&f, &common::random_trace_from(&up), 0, beta).unwrap();
            let (vd, _) = smooth_robustness(&f, &common::random_trace_from(&dn), 0, beta).unwrap();
            let fd = (vu - vd) / (2.0 * h);
            let denom = fd.abs().max(g[k].abs()).max(1.0);
            assert!(
                (fd - g[k]).abs() / denom < 1e-5,
                "gradient mismatch at {k}: fd {fd} vs {}",
                g[k]
            );
        }
        grad_checked += 1;
    }
    // trace-level Lipschitz certificate
    for _ in 0..1000 {
        let f = common::random_formula(&mut rng, 3);
        let horizon = f.horizon();
        if horizon > 12 {
            continue;
        }
        let len = horizon + 1;
        let a = common::random_trace(&mut rng, len);
        let b = common::random_trace(&mut rng, len);
        let lip = lipschitz_constant(&f, VectorNorm::Inf);
        let (ra, rb) = (
            eval_robustness(&f, &a, 0).unwrap(),
            eval_robustness(&f, &b, 0).unwrap(),
        );
        if ra.is_infinite() || rb.is_infinite() {
            continue;
        }
        let dist = a.distance(&b, VectorNorm::Inf);
        assert!(
            (ra - rb).abs() <= lip * dist + 1e-9,
            "certificate broke: |{ra} - {rb}| > {lip} * {dist}"
        );
    }
    println!(
        "criterion 6 (STL semantics): PASS - 10^4 sign-soundness, 60 gradient checks, 10^3 Lipschitz pairs"
    );
}

#[test]
fn criterion_7_end_to_end_guarantee() {
    let b = benchmark();
    assert_eq!(b.mc.runs, 500);
    assert!(
        b.mc.wilson_low >= 0.93,
        "Wilson lower bound {:.4} below 0.93 (rate {:.4})",
        b.mc.wilson_low,
        b.mc.rate
    );
    println!(
        "criterion 7 (end-to-end guarantee): PASS - {}/{} satisfied, Wilson [{:.4}, {:.4}], radii {:?}",
        b.mc.satisfied,
        b.mc.runs,
        b.mc.wilson_low,
        b.mc.wilson_high,
        b.regions.radii.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_8_selection_disjoint_and_nondegrading() {
    let b = benchmark();
    let graph = &b.scenario.graph;
    let mut violations_disjoint = 0usize;
    let mut violations_degrade = 0usize;
    let mut degrade_checks = 0usize;
    for run in &b.runs {
        let steps = &run.trace.steps;
        for step in steps {
            // selected agents must have pairwise disjoint clique sets
            for (ai, &i) in step.selected.iter().enumerate() {
                for &j in &step.selected[ai + 1..] {
                    if !graph.shared_cliques(i, j).is_empty() {
                        violations_disjoint += 1;
                    }
                }
            }
        }
        // non-degradation wherever a subproblem reported feasible
        for w in steps.windows(2) {
            let (before, after) = (&w[0], &w[1]);
            for &i in &before.solved {
                for &ci in &graph.memberships[i] {
                    degrade_checks += 1;
                    let floor = before.clique_robustness[ci].min(0.0);
                    if after.clique_robustness[ci] < floor - 1e-7 {
                        violations_degrade += 1;
                    }
                }
            }
        }
    }
    assert_eq!(violations_disjoint, 0, "selection disjointness violated");
    assert_eq!(violations_degrade, 0, "non-degradation violated");
    assert!(degrade_checks > 0, "no feasible subproblem steps recorded");
    println!(
        "criterion 8 (selection disjointness + non-degradation): PASS - {} degradation checks, 0 violations",
        degrade_checks
    );
}

#[test]
fn criterion_9_conservatism_comparison() {
    let b = benchmark();
    assert!(
        b.verify.cp_max_agent_radius < b.verify.union_radius_conservative,
        "cp radius {:.4} not smaller than union bound {:.4}",
        b.verify.cp_max_agent_radius,
        b.verify.union_radius_conservative
    );
    println!(
        "criterion 9 (conservatism comparison): PASS - cp at 95% = {:.4} < union bound at 70% = {:.4} (exact-tail union {:.4})",
        b.verify.cp_max_agent_radius,
        b.verify.union_radius_conservative,
        b.verify.union_radius_exact
    );
}

#[test]
fn criterion_10_determinism() {
    let b = benchmark();
    let sc = &b.scenario;
    let dir = std::env::temp_dir().join("stlmas-acceptance-determinism");
    std::fs::create_dir_all(&dir).unwrap();
    // dataset bytes
    let ds1 = pipeline::generate_dataset(sc);
    let ds2 = pipeline::generate_dataset(sc);
    let (p1, p2) = (dir.join("a.csv"), dir.join("b.csv"));
    stlmas_core::data::export_csv(&ds1, &p1).unwrap();
    stlmas_core::data::export_csv(&ds2, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap(), "dataset bytes differ");
    // training artifact bytes
    let g2 = pipeline::train(sc, &ds1).unwrap();
    let a1 = stlmas_core::report::to_json_pretty(&b.gains);
    let a2 = stlmas_core::report::to_json_pretty(&g2);
    assert_eq!(a1, a2, "training artifact bytes differ");
    // closed-loop trace bytes
    let tightened = pipeline::tightened_spec(sc, &b.regions).unwrap();
    let (inputs, states) = pipeline::initial_plans(sc, &tightened).unwrap();
    let gains = b.gains.to_gains().unwrap();
    let realization = pipeline::realization_from_seed(sc, 2025);
    let (t1, t2) = (dir.join("a.jsonl"), dir.join("b.jsonl"));
    for path in [&t1, &t2] {
        let trace = pipeline::run_one(
            sc,
            &gains,
            &tightened,
            &inputs,
            &states,
            &realization,
            ExecutionMode::Distributed,
        )
        .unwrap();
        pipeline::write_trace_jsonl(&trace, &sc.name, sc.horizon, 2025, path).unwrap();
    }
    assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap(), "trace bytes differ");
    println!("criterion 10 (determinism): PASS - byte-identical dataset, artifact and trace reruns");
}
