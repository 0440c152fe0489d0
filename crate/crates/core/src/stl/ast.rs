use nalgebra::DVector;

use super::StlError;

/// Zero-based index of an agent within a scenario.
pub type AgentId = usize;

/// Maps named agent signals to coordinate slices of an aggregate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalLayout {
    names: Vec<String>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl SignalLayout {
    pub fn new(names: Vec<String>, dims: Vec<usize>) -> Self {
        assert_eq!(names.len(), dims.len());
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Self { names, dims, offsets, total }
    }

    /// Layout covering only the given agents, in the given order.
    pub fn restrict(&self, members: &[AgentId]) -> SignalLayout {
        SignalLayout::new(
            members.iter().map(|&i| self.names[i].clone()).collect(),
            members.iter().map(|&i| self.dims[i]).collect(),
        )
    }

    pub fn index_of(&self, name: &str) -> Option<AgentId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, agent: AgentId) -> &str {
        &self.names[agent]
    }

    pub fn dim(&self, agent: AgentId) -> usize {
        self.dims[agent]
    }

    pub fn offset(&self, agent: AgentId) -> usize {
        self.offsets[agent]
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn num_agents(&self) -> usize {
        self.names.len()
    }
}

/// Affine predicate `coeffs' y + offset >= 0` over the concatenated states of
/// the agents in `binding` (ascending order).
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub binding: Vec<AgentId>,
    pub coeffs: DVector<f64>,
    pub offset: f64,
}

impl Predicate {
    pub fn new(binding: Vec<AgentId>, coeffs: DVector<f64>, offset: f64) -> Result<Self, StlError> {
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(StlError::ZeroPredicate);
        }
        Ok(Self { binding, coeffs, offset })
    }

    /// Predicate over a single scalar agent: `coeff * x + offset >= 0`.
    pub fn scalar(agent: AgentId, coeff: f64, offset: f64) -> Self {
        Self { binding: vec![agent], coeffs: DVector::from_element(1, coeff), offset }
    }

    /// Gathers the bound coordinates from an aggregate sample and evaluates
    /// the affine function.
    pub fn value(&self, sample: &DVector<f64>, layout: &SignalLayout) -> f64 {
        let mut acc = self.offset;
        let mut k = 0;
        for &agent in &self.binding {
            let off = layout.offset(agent);
            for d in 0..layout.dim(agent) {
                acc += self.coeffs[k] * sample[off + d];
                k += 1;
            }
        }
        acc
    }

    /// Scatters the predicate coefficients into a gradient over the full
    /// aggregate sample, scaled by `weight`.
    pub fn scatter_gradient(
        &self,
        weight: f64,
        layout: &SignalLayout,
        out: &mut [f64],
    ) {
        let mut k = 0;
        for &agent in &self.binding {
            let off = layout.offset(agent);
            for d in 0..layout.dim(agent) {
                out[off + d] += weight * self.coeffs[k];
                k += 1;
            }
        }
    }
}

/// STL formula AST with bounded temporal operators.
///
/// Interval bounds are step counts; the invariant `a <= b` is enforced by the
/// parser and by [`StlFormula::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum StlFormula {
    True,
    Pred(Predicate),
    Not(Box<StlFormula>),
    And(Vec<StlFormula>),
    Or(Vec<StlFormula>),
    Until { a: usize, b: usize, lhs: Box<StlFormula>, rhs: Box<StlFormula> },
    Eventually { a: usize, b: usize, child: Box<StlFormula> },
    Always { a: usize, b: usize, child: Box<StlFormula> },
}

impl StlFormula {
    /// Formula horizon: the largest time offset the formula reads.
    ///
    /// `N^pi = 0`, negation preserves, conjunction takes the max, and a
    /// `[a,b]`-bounded operator adds `b` on top of its children.
    pub fn horizon(&self) -> usize {
        match self {
            StlFormula::True | StlFormula::Pred(_) => 0,
            StlFormula::Not(c) => c.horizon(),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                cs.iter().map(|c| c.horizon()).max().unwrap_or(0)
            }
            StlFormula::Until { b, lhs, rhs, .. } => b + lhs.horizon().max(rhs.horizon()),
            StlFormula::Eventually { b, child, .. } | StlFormula::Always { b, child, .. } => {
                b + child.horizon()
            }
        }
    }

    /// Sorted union of all agents read by predicates in the formula.
    pub fn binding(&self) -> Vec<AgentId> {
        let mut ids = Vec::new();
        self.collect_binding(&mut ids);
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn collect_binding(&self, ids: &mut Vec<AgentId>) {
        match self {
            StlFormula::True => {}
            StlFormula::Pred(p) => ids.extend_from_slice(&p.binding),
            StlFormula::Not(c) => c.collect_binding(ids),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                for c in cs {
                    c.collect_binding(ids);
                }
            }
            StlFormula::Until { lhs, rhs, .. } => {
                lhs.collect_binding(ids);
                rhs.collect_binding(ids);
            }
            StlFormula::Eventually { child, .. } | StlFormula::Always { child, .. } => {
                child.collect_binding(ids)
            }
        }
    }

    /// Checks interval orientation on every temporal node.
    pub fn validate(&self) -> Result<(), StlError> {
        match self {
            StlFormula::True | StlFormula::Pred(_) => Ok(()),
            StlFormula::Not(c) => c.validate(),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                cs.iter().try_for_each(|c| c.validate())
            }
            StlFormula::Until { a, b, lhs, rhs } => {
                if a > b {
                    return Err(StlError::InvertedInterval { a: *a, b: *b });
                }
                lhs.validate()?;
                rhs.validate()
            }
            StlFormula::Eventually { a, b, child } | StlFormula::Always { a, b, child } => {
                if a > b {
                    return Err(StlError::InvertedInterval { a: *a, b: *b });
                }
                child.validate()
            }
        }
    }

    /// Number of predicate leaves.
    pub fn num_predicates(&self) -> usize {
        match self {
            StlFormula::True => 0,
            StlFormula::Pred(_) => 1,
            StlFormula::Not(c) => c.num_predicates(),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                cs.iter().map(|c| c.num_predicates()).sum()
            }
            StlFormula::Until { lhs, rhs, .. } => lhs.num_predicates() + rhs.num_predicates(),
            StlFormula::Eventually { child, .. } | StlFormula::Always { child, .. } => {
                child.num_predicates()
            }
        }
    }

    pub fn always(a: usize, b: usize, child: StlFormula) -> Self {
        StlFormula::Always { a, b, child: Box::new(child) }
    }

    pub fn eventually(a: usize, b: usize, child: StlFormula) -> Self {
        StlFormula::Eventually { a, b, child: Box::new(child) }
    }

    pub fn until(a: usize, b: usize, lhs: StlFormula, rhs: StlFormula) -> Self {
        StlFormula::Until { a, b, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn not(child: StlFormula) -> Self {
        StlFormula::Not(Box::new(child))
    }
}

/// A time-indexed sequence of aggregate state vectors together with the
/// layout mapping agent names to coordinate slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    layout: SignalLayout,
    samples: Vec<DVector<f64>>,
}

impl Trace {
    pub fn new(layout: SignalLayout, samples: Vec<DVector<f64>>) -> Result<Self, StlError> {
        for (t, s) in samples.iter().enumerate() {
            if s.len() != layout.total_dim() {
                return Err(StlError::DimensionMismatch(format!(
                    "sample {t} has dimension {}, layout expects {}",
                    s.len(),
                    layout.total_dim()
                )));
            }
        }
        Ok(Self { layout, samples })
    }

    /// Scalar single-signal trace, mostly for tests and small examples.
    pub fn scalar(name: &str, values: &[f64]) -> Self {
        let layout = SignalLayout::new(vec![name.to_string()], vec![1]);
        let samples = values.iter().map(|&v| DVector::from_element(1, v)).collect();
        Self { layout, samples }
    }

    pub fn layout(&self) -> &SignalLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, t: usize) -> &DVector<f64> {
        &self.samples[t]
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.samples
    }

    /// Largest `max_t ||tr1(t) - tr2(t)||` distance in the given norm.
    pub fn distance(&self, other: &Trace, norm: VectorNorm) -> f64 {
        assert_eq!(self.len(), other.len());
        let mut worst: f64 = 0.0;
        for t in 0..self.len() {
            let diff = &self.samples[t] - &other.samples[t];
            let d = match norm {
                VectorNorm::Inf => diff.amax(),
                VectorNorm::L2 => diff.norm(),
            };
            worst = worst.max(d);
        }
        worst
    }
}

/// Per-step vector norm; the trace-space metric is `max_t ||.||` in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VectorNorm {
    Inf,
    L2,
}
