//! Multi-agent system model: per-agent linear dynamics, cliques induced by
//! the conjunctive task structure, the nominal/error decomposition under
//! disturbance feedback, and the stacked disturbance-to-error operators.

mod clique;
mod dynamics;
mod stacked;

pub use clique::{aggregate_samples, aggregate_trajectories, CliqueSpec, InteractionGraph};
pub use dynamics::{nominal_trajectory, simulate_closed_loop, AgentDynamics, MasSystem};
pub use stacked::{
    build_stacked, error_trajectory, gains_from_response, response_matrix, AgentGains,
    FeedbackGains, StackedOperators,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MasError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("clique members must be nonempty, distinct and sorted ascending, got {0:?}")]
    BadCliqueMembers(Vec<usize>),
    #[error("clique member {member} out of range for {num_agents} agents")]
    MemberOutOfRange { member: usize, num_agents: usize },
    #[error("formula horizon {horizon} exceeds the scenario horizon {n}")]
    HorizonTooLong { horizon: usize, n: usize },
    #[error("formula reads agents {binding:?} outside the clique {members:?}")]
    BindingOutsideClique { binding: Vec<usize>, members: Vec<usize> },
    #[error("feedback gains are not causal: block ({t},{k}) is nonzero")]
    NonCausalGains { t: usize, k: usize },
    #[error("missing trajectory for clique member {0}")]
    MissingMember(usize),
}
