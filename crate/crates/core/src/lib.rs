//! Probabilistic signal-temporal-logic control for stochastic linear
//! multi-agent systems.
//!
//! The crate covers the full pipeline:
//!
//! - [`stl`] — formula DSL, Boolean/quantitative semantics, smoothed
//!   robustness with gradients, Lipschitz constants.
//! - [`mas`] — agent dynamics, cliques, nominal/error decomposition and the
//!   stacked disturbance-to-error operators.
//! - [`data`] — disturbance datasets, train/calibration splits, error
//!   trajectory sets, CSV interchange.
//! - [`lp`] — a structure-exploiting interior-point LP solver.
//! - [`uq`] — conformal quantiles, CVaR, nonconformity scores, alternating
//!   gain/weight training and calibrated prediction regions.
//! - [`synth`] — Lipschitz-tightened STL synthesis (centralized, per-agent
//!   initial and per-step subproblems).
//! - [`runtime`] — distributed closed-loop execution with in-process
//!   message passing.
//! - [`verify`] — Monte-Carlo satisfaction, coverage experiments and the
//!   union-bound baseline.
//! - [`config`] / [`pipeline`] — TOML scenario description and end-to-end
//!   orchestration used by the CLI.

pub mod config;
pub mod data;
pub mod lp;
pub mod mas;
pub mod pipeline;
pub mod report;
pub mod runtime;
pub mod stl;
pub mod synth;
pub mod uq;
pub mod verify;

pub use config::Scenario;
pub use stl::{StlFormula, Trace};
