use nalgebra::{DMatrix, DVector};

use super::dynamics::AgentDynamics;
use super::MasError;

/// Stacked operators mapping a disturbance sequence `w(0:N-1)` to the error
/// trajectory `e(1:N)`.
///
/// `a_stack` is block-Toeplitz with block `(r, c) = A^{r-c}` for `r >= c`
/// and zero above; `b_stack = a_stack (I_N (x) B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedOperators {
    pub a_stack: DMatrix<f64>,
    pub b_stack: DMatrix<f64>,
    pub horizon: usize,
    pub state_dim: usize,
    pub input_dim: usize,
}

/// Builds the stacked operators for one agent over `n` steps.
pub fn build_stacked(dynamics: &AgentDynamics, n: usize) -> StackedOperators {
    assert!(n >= 1, "horizon must be at least 1");
    let sd = dynamics.state_dim();
    let id = dynamics.input_dim();
    // powers A^0 .. A^{n-1}
    let mut powers = Vec::with_capacity(n);
    powers.push(DMatrix::<f64>::identity(sd, sd));
    for k in 1..n {
        let next = &dynamics.a * &powers[k - 1];
        powers.push(next);
    }
    let mut a_stack = DMatrix::zeros(n * sd, n * sd);
    for r in 0..n {
        for c in 0..=r {
            a_stack.view_mut((r * sd, c * sd), (sd, sd)).copy_from(&powers[r - c]);
        }
    }
    let mut kron_b = DMatrix::zeros(n * sd, n * id);
    for k in 0..n {
        kron_b.view_mut((k * sd, k * id), (sd, id)).copy_from(&dynamics.b);
    }
    let b_stack = &a_stack * &kron_b;
    StackedOperators { a_stack, b_stack, horizon: n, state_dim: sd, input_dim: id }
}

/// One agent's disturbance-feedback gains, stored densely as the stacked
/// `(N m) x (N n)` matrix with strictly block-lower-triangular structure:
/// block `(t, k)` feeds `w(k)` into `u(t)` and must vanish for `k >= t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGains {
    mat: DMatrix<f64>,
    horizon: usize,
    input_dim: usize,
    state_dim: usize,
}

impl AgentGains {
    pub fn zeros(horizon: usize, input_dim: usize, state_dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(horizon * input_dim, horizon * state_dim),
            horizon,
            input_dim,
            state_dim,
        }
    }

    pub fn from_matrix(
        mat: DMatrix<f64>,
        horizon: usize,
        input_dim: usize,
        state_dim: usize,
    ) -> Result<Self, MasError> {
        if mat.nrows() != horizon * input_dim || mat.ncols() != horizon * state_dim {
            return Err(MasError::DimensionMismatch(format!(
                "gain matrix is {}x{}, expected {}x{}",
                mat.nrows(),
                mat.ncols(),
                horizon * input_dim,
                horizon * state_dim
            )));
        }
        let g = Self { mat, horizon, input_dim, state_dim };
        g.check_causal()?;
        Ok(g)
    }

    pub fn check_causal(&self) -> Result<(), MasError> {
        for t in 0..self.horizon {
            for k in t..self.horizon {
                if self.block(t, k).iter().any(|&v| v != 0.0) {
                    return Err(MasError::NonCausalGains { t, k });
                }
            }
        }
        Ok(())
    }

    pub fn block(&self, t: usize, k: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.mat
            .view((t * self.input_dim, k * self.state_dim), (self.input_dim, self.state_dim))
    }

    /// Writes block `(t, k)`; enforces the structural zeros.
    pub fn set_block(&mut self, t: usize, k: usize, value: &DMatrix<f64>) {
        assert!(k < t, "block ({t},{k}) must stay zero for causality");
        self.mat
            .view_mut((t * self.input_dim, k * self.state_dim), (self.input_dim, self.state_dim))
            .copy_from(value);
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
}

/// All agents' gains, agent-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGains {
    pub agents: Vec<AgentGains>,
}

impl FeedbackGains {
    pub fn zeros(system_dims: &[(usize, usize)], horizon: usize) -> Self {
        Self {
            agents: system_dims
                .iter()
                .map(|&(m, n)| AgentGains::zeros(horizon, m, n))
                .collect(),
        }
    }
}

/// Error trajectory `e(1:N) = (A_stack + B_stack Gamma) w(0:N-1)`.
pub fn error_trajectory(
    ops: &StackedOperators,
    gains: &AgentGains,
    disturbances: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, MasError> {
    if disturbances.len() != ops.horizon {
        return Err(MasError::DimensionMismatch(format!(
            "{} disturbance steps, horizon {}",
            disturbances.len(),
            ops.horizon
        )));
    }
    gains.check_causal()?;
    let sd = ops.state_dim;
    let mut w = DVector::zeros(ops.horizon * sd);
    for (k, wk) in disturbances.iter().enumerate() {
        if wk.len() != sd {
            return Err(MasError::DimensionMismatch(format!(
                "disturbance {k} has dimension {}, expected {sd}",
                wk.len()
            )));
        }
        w.rows_mut(k * sd, sd).copy_from(wk);
    }
    let stacked = &ops.a_stack * &w + &ops.b_stack * (gains.matrix() * &w);
    Ok((0..ops.horizon).map(|t| DVector::from(stacked.rows(t * sd, sd))).collect())
}

/// Dense closed-loop response `H = A_stack + B_stack Gamma` mapping
/// `w(0:N-1)` to `e(1:N)`.
pub fn response_matrix(ops: &StackedOperators, gains: &AgentGains) -> DMatrix<f64> {
    &ops.a_stack + &ops.b_stack * gains.matrix()
}

/// Recovers the unique causal gains realizing a target response matrix.
///
/// Valid for square invertible `B`: with `H` block-lower-triangular and unit
/// block diagonal, `Gamma^{t,k} = B^{-1} (H^{t,k} - A H^{t-1,k})` where
/// `H^{t,t} = I` and `H^{-1,k} = 0`.
pub fn gains_from_response(
    dynamics: &AgentDynamics,
    response: &DMatrix<f64>,
    horizon: usize,
) -> Result<AgentGains, MasError> {
    let sd = dynamics.state_dim();
    if dynamics.input_dim() != sd {
        return Err(MasError::DimensionMismatch(
            "response parameterization needs a square input matrix".into(),
        ));
    }
    let b_inv = dynamics
        .b
        .clone()
        .try_inverse()
        .ok_or_else(|| MasError::DimensionMismatch("input matrix B is singular".into()))?;
    let block = |r: isize, c: usize| -> DMatrix<f64> {
        if r < 0 {
            DMatrix::zeros(sd, sd)
        } else if r as usize == c {
            DMatrix::identity(sd, sd)
        } else if (r as usize) < c {
            DMatrix::zeros(sd, sd)
        } else {
            response.view((r as usize * sd, c * sd), (sd, sd)).into()
        }
    };
    let mut gains = AgentGains::zeros(horizon, sd, sd);
    for t in 1..horizon {
        for k in 0..t {
            let g = &b_inv * (block(t as isize, k) - &dynamics.a * block(t as isize - 1, k));
            gains.set_block(t, k, &g);
        }
    }
    Ok(gains)
}
