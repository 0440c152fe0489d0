use nalgebra::{DMatrix, DVector};

use super::stacked::AgentGains;
use super::MasError;
use crate::stl::SignalLayout;

/// Discrete-time linear agent `x(t+1) = A x(t) + B u(t) + w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl AgentDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, x0: DVector<f64>) -> Result<Self, MasError> {
        if !a.is_square() {
            return Err(MasError::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(MasError::DimensionMismatch(format!(
                "B has {} rows, A has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if x0.len() != a.nrows() {
            return Err(MasError::DimensionMismatch(format!(
                "x0 has dimension {}, state dimension is {}",
                x0.len(),
                a.nrows()
            )));
        }
        Ok(Self { a, b, x0 })
    }

    /// Scalar integrator-style agent, handy in tests.
    pub fn scalar(a: f64, b: f64, x0: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            x0: DVector::from_element(1, x0),
        }
    }

    /// 2D single integrator `x(t+1) = x(t) + u(t) + w(t)`.
    pub fn single_integrator_2d(x0: [f64; 2]) -> Self {
        Self {
            a: DMatrix::identity(2, 2),
            b: DMatrix::identity(2, 2),
            x0: DVector::from_vec(x0.to_vec()),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// PBH-style stabilizability probe: every eigenvalue on or outside the
    /// unit circle needs `[A - lambda I, B]` to have full row rank. The
    /// result is advisory; nothing downstream exploits it.
    pub fn is_stabilizable(&self) -> bool {
        let n = self.state_dim();
        let eigs = self.a.complex_eigenvalues();
        for lambda in eigs.iter() {
            if lambda.norm() < 1.0 - 1e-9 {
                continue;
            }
            let mut m = DMatrix::<nalgebra::Complex<f64>>::zeros(n, n + self.input_dim());
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] = nalgebra::Complex::new(self.a[(r, c)], 0.0);
                }
                m[(r, r)] -= lambda;
                for c in 0..self.input_dim() {
                    m[(r, n + c)] = nalgebra::Complex::new(self.b[(r, c)], 0.0);
                }
            }
            if m.rank(1e-9) < n {
                return false;
            }
        }
        true
    }
}

/// The agents, in index order, together with the state layout used by
/// formulas to address coordinate slices.
#[derive(Debug, Clone)]
pub struct MasSystem {
    pub agents: Vec<AgentDynamics>,
    pub layout: SignalLayout,
}

impl MasSystem {
    pub fn new(names: Vec<String>, agents: Vec<AgentDynamics>) -> Self {
        let dims = agents.iter().map(|a| a.state_dim()).collect();
        let layout = SignalLayout::new(names, dims);
        Self { agents, layout }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }
}

/// Deterministic rollout `z(t+1) = A z(t) + B v(t)` from `z(0) = x0`.
pub fn nominal_trajectory(dynamics: &AgentDynamics, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut z = Vec::with_capacity(inputs.len() + 1);
    z.push(dynamics.x0.clone());
    for v in inputs {
        let last = z.last().unwrap();
        z.push(&dynamics.a * last + &dynamics.b * v);
    }
    z
}

/// Simulates the disturbed closed loop under the disturbance-feedback policy
/// `u(t) = sum_k Gamma^{t,k} w(k) + v(t)`.
///
/// Returns the state sequence `x(0..N)` and the applied inputs `u(0..N-1)`.
pub fn simulate_closed_loop(
    dynamics: &AgentDynamics,
    gains: &AgentGains,
    nominal_inputs: &[DVector<f64>],
    disturbances: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = nominal_inputs.len();
    assert_eq!(disturbances.len(), n, "one disturbance per input step");
    let mut x = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    x.push(dynamics.x0.clone());
    for t in 0..n {
        let mut ut = nominal_inputs[t].clone();
        for k in 0..t {
            ut += gains.block(t, k) * &disturbances[k];
        }
        let next = &dynamics.a * x.last().unwrap() + &dynamics.b * &ut + &disturbances[t];
        x.push(next);
        u.push(ut);
    }
    (x, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_accumulates_inputs() {
        let d = AgentDynamics::scalar(1.0, 1.0, 0.0);
        let v = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)];
        let z = nominal_trajectory(&d, &v);
        let flat: Vec<f64> = z.iter().map(|s| s[0]).collect();
        assert_eq!(flat, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn autonomous_rollout_is_matrix_power() {
        let d = AgentDynamics::scalar(0.5, 1.0, 2.0);
        let v = vec![DVector::zeros(1); 3];
        let z = nominal_trajectory(&d, &v);
        for (t, s) in z.iter().enumerate() {
            assert!((s[0] - 2.0 * 0.5_f64.powi(t as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn rollout_is_superposed() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d = AgentDynamics::new(
            DMatrix::from_vec(2, 2, vec![0.9, 0.1, -0.2, 1.1]),
            DMatrix::from_vec(2, 1, vec![1.0, 0.5]),
            DVector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        let n = 5;
        let rand_inputs = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<DVector<f64>> {
            (0..n)
                .map(|_| DVector::from_fn(1, |_, _| rng.random_range(-1.0..1.0)))
                .collect()
        };
        let v1 = rand_inputs(&mut rng);
        let v2 = rand_inputs(&mut rng);
        let sum: Vec<DVector<f64>> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let z0 = nominal_trajectory(&d, &vec![DVector::zeros(1); n]);
        let za = nominal_trajectory(&d, &v1);
        let zb = nominal_trajectory(&d, &v2);
        let zs = nominal_trajectory(&d, &sum);
        for t in 0..=n {
            let lhs = &zs[t] - &z0[t];
            let rhs = (&za[t] - &z0[t]) + (&zb[t] - &z0[t]);
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn stabilizability_probe() {
        let stable = AgentDynamics::scalar(0.5, 0.0, 0.0);
        assert!(stable.is_stabilizable());
        let uncontrollable_unstable = AgentDynamics::scalar(2.0, 0.0, 0.0);
        assert!(!uncontrollable_unstable.is_stabilizable());
        let integrator = AgentDynamics::single_integrator_2d([0.0, 0.0]);
        assert!(integrator.is_stabilizable());
    }
}
