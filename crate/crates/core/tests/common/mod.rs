//! Shared generators for the integration suites: random formulas, traces
//! and linear systems.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use stlmas_core::mas::{AgentDynamics, AgentGains};
use stlmas_core::stl::{Predicate, StlFormula, Trace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random scalar-signal formula of bounded depth.
pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize) -> StlFormula {
    let leaf = |rng: &mut ChaCha8Rng| {
        let coeff = if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            * rng.random_range(0.2..2.0);
        let offset = rng.random_range(-2.0..2.0);
        StlFormula::Pred(Predicate::scalar(0, coeff, offset))
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.random_range(0..10) {
        0..=2 => leaf(rng),
        3 => StlFormula::not(random_formula(rng, depth - 1)),
        4 => StlFormula::And(vec![
            random_formula(rng, depth - 1),
            random_formula(rng, depth - 1),
        ]),
        5 => StlFormula::Or(vec![
            random_formula(rng, depth - 1),
            random_formula(rng, depth - 1),
        ]),
        6 | 7 => {
            let a = rng.random_range(0..3);
            let b = a + rng.random_range(0..3);
            if rng.random_bool(0.5) {
                StlFormula::eventually(a, b, random_formula(rng, depth - 1))
            } else {
                StlFormula::always(a, b, random_formula(rng, depth - 1))
            }
        }
        _ => {
            let a = rng.random_range(0..2);
            let b = a + rng.random_range(0..3);
            StlFormula::until(
                a,
                b,
                random_formula(rng, depth - 1),
                random_formula(rng, depth - 1),
            )
        }
    }
}

pub fn random_trace(rng: &mut ChaCha8Rng, len: usize) -> Trace {
    let vals: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
    Trace::scalar("x", &vals)
}

pub fn random_trace_from(vals: &[f64]) -> Trace {
    Trace::scalar("x", vals)
}

/// Random stable-ish dynamics with square invertible input matrix.
pub fn random_agent(rng: &mut ChaCha8Rng, dim: usize) -> AgentDynamics {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let mut b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..dim {
        b[(i, i)] += 2.0;
    }
    let x0 = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    AgentDynamics::new(a, b, x0).unwrap()
}

pub fn random_gains(rng: &mut ChaCha8Rng, horizon: usize, dim: usize) -> AgentGains {
    let mut gains = AgentGains::zeros(horizon, dim, dim);
    for t in 1..horizon {
        for k in 0..t {
            let blk = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.6..0.6));
            gains.set_block(t, k, &blk);
        }
    }
    gains
}

pub fn random_disturbances(
    rng: &mut ChaCha8Rng,
    horizon: usize,
    dim: usize,
) -> Vec<DVector<f64>> {
    (0..horizon)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)))
        .collect()
}
