//! `stlmas` — scenario-driven pipeline runner.
//!
//! Subcommands mirror the pipeline stages: `gen-data`, `train`, `calibrate`,
//! `run`, `verify`. Every command is a pure function of its inputs and
//! seeds; reruns reproduce outputs byte for byte.
//!
//! Exit codes: 0 success, 2 infeasible, 3 bad input, 4 internal solver
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stlmas_core::config;
use stlmas_core::data::{export_csv, ingest_csv};
use stlmas_core::pipeline::{self, PipelineError};
use stlmas_core::runtime::ExecutionMode;

mod plot;

#[derive(Parser)]
#[command(name = "stlmas", version, about = "probabilistic STL control for stochastic multi-agent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a disturbance dataset CSV from the scenario's noise model.
    GenData {
        /// Scenario TOML.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train disturbance-feedback gains and region weights on the training
    /// split (alternating convex programs).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV produced by gen-data (defaults to regenerating from
        /// the scenario seed).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output JSON artifact.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate prediction regions on the calibration split.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Trained gains artifact.
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// PAC mode: also tighten the level for this failure probability of
        /// the calibration draw.
        #[arg(long)]
        pac_beta: Option<f64>,
    },
    /// Execute one closed-loop episode and write a JSON-lines trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disturbance realization seed (mutually exclusive with --dataset).
        #[arg(long)]
        seed: Option<u64>,
        /// Use the reserved test sample (index 0) of this dataset CSV.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Apply the centralized plan without replanning.
        #[arg(long)]
        open_loop: bool,
    },
    /// Monte-Carlo verification: satisfaction rate, coverage experiment and
    /// the union-bound conservatism comparison.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        /// Output report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Number of closed-loop runs (default from the scenario).
        #[arg(long)]
        runs: Option<usize>,
        /// Directory for plot data (robustness CSV, selection histogram,
        /// trajectory polylines).
        #[arg(long)]
        plot_dir: Option<PathBuf>,
        #[arg(long)]
        open_loop: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_or_generate(
    sc: &config::Scenario,
    dataset: &Option<PathBuf>,
) -> Result<stlmas_core::data::DisturbanceDataset, PipelineError> {
    match dataset {
        Some(path) => {
            let dims: Vec<usize> = sc.system.agents.iter().map(|a| a.state_dim()).collect();
            Ok(ingest_csv(path, sc.system.num_agents(), sc.horizon, &dims)?)
        }
        None => Ok(pipeline::generate_dataset(sc)),
    }
}

fn dispatch(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::GenData { config, out, seed } => {
            let mut sc = config::load(&config)?;
            if let Some(seed) = seed {
                sc.dataset.seed = seed;
            }
            for w in &sc.warnings {
                eprintln!("warning: {w}");
            }
            let ds = pipeline::generate_dataset(&sc);
            export_csv(&ds, &out)?;
            println!(
                "wrote {} samples x {} agents x {} steps to {}",
                ds.num_samples(),
                ds.num_agents(),
                ds.horizon,
                out.display()
            );
            Ok(())
        }
        Command::Train { config, dataset, out } => {
            let sc = config::load(&config)?;
            for w in &sc.warnings {
                eprintln!("warning: {w}");
            }
            let ds = load_or_generate(&sc, &dataset)?;
            let artifact = pipeline::train(&sc, &ds)?;
            if artifact.theta_hat_clamped {
                eprintln!(
                    "warning: training level clamped to {:.6} (training set too small for the formula)",
                    artifact.theta_hat
                );
            }
            pipeline::save_json(&artifact, &out)?;
            let last = artifact.objective_trace.last();
            println!(
                "trained {} iterations, final objective {:.6}, weights {:?}",
                artifact.objective_trace.len(),
                last.map(|l| l.after_weight_lp).unwrap_or(f64::NAN),
                artifact.weights
            );
            Ok(())
        }
        Command::Calibrate { config, dataset, gains, out, pac_beta } => {
            let sc = config::load(&config)?;
            let ds = load_or_generate(&sc, &dataset)?;
            let gains_artifact = pipeline::load_gains(&gains)?;
            let artifact = pipeline::calibrate(&sc, &ds, &gains_artifact, pac_beta)?;
            pipeline::save_json(&artifact, &out)?;
            println!("quantile {:.6}", artifact.quantile);
            for (i, r) in artifact.radii.iter().enumerate() {
                println!("clique {i}: radius {r:.6}");
            }
            if let Some(pac) = &artifact.pac {
                println!(
                    "pac: beta {:.3e}, adjusted level {:.6}, confidence {:.6}",
                    pac.beta, pac.adjusted_level, pac.confidence
                );
            }
            Ok(())
        }
        Command::Run { config, gains, regions, out, seed, dataset, open_loop } => {
            let sc = config::load(&config)?;
            let gains_artifact = pipeline::load_gains(&gains)?;
            let regions_artifact = pipeline::load_regions(&regions)?;
            let tightened = pipeline::tightened_spec(&sc, &regions_artifact)?;
            let mode =
                if open_loop { ExecutionMode::OpenLoop } else { ExecutionMode::Distributed };
            let (inputs, states) = match mode {
                ExecutionMode::Distributed => pipeline::initial_plans(&sc, &tightened)?,
                ExecutionMode::OpenLoop => pipeline::centralized_plan(&sc, &tightened)?,
            };
            let run_seed = seed.unwrap_or(sc.verify.seed);
            let realization = match &dataset {
                Some(path) => {
                    let dims: Vec<usize> =
                        sc.system.agents.iter().map(|a| a.state_dim()).collect();
                    let ds = ingest_csv(path, sc.system.num_agents(), sc.horizon, &dims)?;
                    pipeline::realization_from_dataset(&ds)
                }
                None => pipeline::realization_from_seed(&sc, run_seed),
            };
            let feedback = gains_artifact.to_gains()?;
            let trace = pipeline::run_one(
                &sc,
                &feedback,
                &tightened,
                &inputs,
                &states,
                &realization,
                mode,
            )?;
            pipeline::write_trace_jsonl(&trace, &sc.name, sc.horizon, run_seed, &out)?;
            println!(
                "verdict {} robustness {:.6}{}",
                if trace.verdict { "SAT" } else { "UNSAT" },
                trace.robustness,
                if trace.flagged { " (flagged: fallback used)" } else { "" }
            );
            Ok(())
        }
        Command::Verify { config, gains, regions, out, runs, plot_dir, open_loop } => {
            let sc = config::load(&config)?;
            let gains_artifact = pipeline::load_gains(&gains)?;
            let regions_artifact = pipeline::load_regions(&regions)?;
            let n_runs = runs.unwrap_or(sc.verify.runs);
            let mode =
                if open_loop { ExecutionMode::OpenLoop } else { ExecutionMode::Distributed };
            let output = pipeline::verify(&sc, &gains_artifact, &regions_artifact, n_runs, mode)?;
            pipeline::save_json(&output.artifact, &out)?;
            let a = &output.artifact;
            println!(
                "satisfaction {}/{} = {:.4} (wilson [{:.4}, {:.4}]), target {:.4}: {}",
                a.satisfied,
                a.runs,
                a.rate,
                a.wilson_low,
                a.wilson_high,
                a.target_rate,
                if a.meets_target { "MEETS" } else { "MISSES" }
            );
            println!(
                "coverage: indicator {:.4}, conditional mean {:.4} (beta mean {:.4})",
                a.coverage_indicator_rate, a.coverage_mean, a.coverage_beta_mean
            );
            println!("baseline comparison at {:.0}% union-bound target:", 100.0 * a.union_target);
            println!("  cp max per-agent radius      {:.4} (at {:.0}%)", a.cp_max_agent_radius, 100.0 * (1.0 - sc.theta));
            println!("  union bound (conservative)   {:.4}", a.union_radius_conservative);
            println!("  union bound (exact tails)    {:.4}", a.union_radius_exact);
            println!("  cp smaller than union bound: {}", a.cp_beats_union);
            if let Some(dir) = plot_dir {
                plot::write_plot_data(&dir, &sc, &output)?;
                println!("plot data in {}", dir.display());
            }
            Ok(())
        }
    }
}
