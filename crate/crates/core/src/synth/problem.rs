use nalgebra::DVector;

/// Quadratic stage and terminal cost for one agent:
/// `sum_k state ||z(k) - ref||^2 + input ||v(k)||^2` plus
/// `terminal ||z(N) - ref||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCost {
    pub state_weight: f64,
    pub input_weight: f64,
    pub terminal_weight: f64,
    pub reference: DVector<f64>,
}

impl AgentCost {
    pub fn input_energy(dim: usize, input_weight: f64) -> Self {
        Self {
            state_weight: 0.0,
            input_weight,
            terminal_weight: 0.0,
            reference: DVector::zeros(dim),
        }
    }

    pub fn stage(&self, z: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let dz = z - &self.reference;
        self.state_weight * dz.norm_squared() + self.input_weight * v.norm_squared()
    }

    pub fn terminal(&self, z: &DVector<f64>) -> f64 {
        let dz = z - &self.reference;
        self.terminal_weight * dz.norm_squared()
    }

    /// Full-horizon cost of states `z(0..N)` and inputs `v(0..N-1)`.
    pub fn trajectory(&self, states: &[DVector<f64>], inputs: &[DVector<f64>]) -> f64 {
        let mut acc = 0.0;
        for (z, v) in states.iter().zip(inputs) {
            acc += self.stage(z, v);
        }
        acc + self.terminal(states.last().expect("nonempty state sequence"))
    }

    pub fn largest_weight(&self) -> f64 {
        self.state_weight.max(self.input_weight).max(self.terminal_weight)
    }
}
