use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::DataError;

/// Where a dataset came from; recorded for report provenance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    Generated { seed: u64, kind: String },
    File(String),
}

/// Per-agent disturbance sequence samples.
///
/// `sequences[agent][sample][t]` is the disturbance vector `w_agent(t)` of
/// sample `sample`. Sample index 0 is reserved as the test point; the
/// remaining indices are split into calibration and training by
/// [`DatasetSplit`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceDataset {
    pub sequences: Vec<Vec<Vec<DVector<f64>>>>,
    pub horizon: usize,
    pub provenance: Provenance,
}

impl DisturbanceDataset {
    pub fn new(
        sequences: Vec<Vec<Vec<DVector<f64>>>>,
        horizon: usize,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        if sequences.is_empty() {
            return Err(DataError::Invalid("no agents".into()));
        }
        let samples = sequences[0].len();
        for (i, per_agent) in sequences.iter().enumerate() {
            if per_agent.len() != samples {
                return Err(DataError::Invalid(format!(
                    "agent {i} has {} samples, agent 0 has {samples}",
                    per_agent.len()
                )));
            }
            let dim = per_agent
                .first()
                .and_then(|s| s.first())
                .map(|v| v.len())
                .ok_or_else(|| DataError::Invalid(format!("agent {i} has no data")))?;
            for (s, seq) in per_agent.iter().enumerate() {
                if seq.len() != horizon {
                    return Err(DataError::Invalid(format!(
                        "agent {i} sample {s} has length {}, expected {horizon}",
                        seq.len()
                    )));
                }
                if seq.iter().any(|v| v.len() != dim) {
                    return Err(DataError::Invalid(format!(
                        "agent {i} sample {s} mixes dimensions"
                    )));
                }
            }
        }
        Ok(Self { sequences, horizon, provenance })
    }

    pub fn num_agents(&self) -> usize {
        self.sequences.len()
    }

    pub fn num_samples(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn agent_dim(&self, agent: usize) -> usize {
        self.sequences[agent][0][0].len()
    }

    pub fn sample(&self, agent: usize, sample: usize) -> &[DVector<f64>] {
        &self.sequences[agent][sample]
    }
}

/// Index split: sample 0 is the held-out test point, `1..=k1` calibrate,
/// `k1+1..=k` train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSplit {
    pub k1: usize,
    /// Total sample count `k + 1`.
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Test,
    Calibration,
    Training,
}

impl DatasetSplit {
    pub fn new(k1: usize, total: usize) -> Result<Self, DataError> {
        let k = total.saturating_sub(1);
        if k1 + 1 >= k || k1 == 0 {
            return Err(DataError::BadSplit { k1, k });
        }
        Ok(Self { k1, total })
    }

    pub fn k(&self) -> usize {
        self.total - 1
    }

    pub fn indices(&self, part: SplitPart) -> Vec<usize> {
        match part {
            SplitPart::Test => vec![0],
            SplitPart::Calibration => (1..=self.k1).collect(),
            SplitPart::Training => (self.k1 + 1..=self.k()).collect(),
        }
    }

    pub fn training_count(&self) -> usize {
        self.k() - self.k1
    }
}

/// Draws `count` i.i.d. Gaussian sequences per agent, `w(t) ~ N(0, sigma2 I)`.
///
/// Reproducible: a fixed seed yields a byte-identical dataset. Samples are
/// independent across sample index and across agents.
pub fn generate_gaussian(
    dims: &[usize],
    horizon: usize,
    sigma2: f64,
    count: usize,
    seed: u64,
) -> DisturbanceDataset {
    generate_gaussian_ar1(dims, horizon, sigma2, 0.0, count, seed)
}

/// AR(1) variant `w(t) = rho w(t-1) + sqrt(1 - rho^2) xi(t)` with stationary
/// marginal `N(0, sigma2 I)`; `rho = 0` recovers the i.i.d. generator.
pub fn generate_gaussian_ar1(
    dims: &[usize],
    horizon: usize,
    sigma2: f64,
    rho: f64,
    count: usize,
    seed: u64,
) -> DisturbanceDataset {
    assert!(sigma2 > 0.0, "variance must be positive");
    assert!(rho.abs() < 1.0, "AR(1) coefficient must satisfy |rho| < 1");
    let normal = Normal::new(0.0, sigma2.sqrt()).unwrap();
    let innovation = (1.0 - rho * rho).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences = dims
        .iter()
        .map(|&dim| {
            (0..count)
                .map(|_| {
                    let mut seq = Vec::with_capacity(horizon);
                    let mut prev: Option<DVector<f64>> = None;
                    for _ in 0..horizon {
                        let xi = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
                        let w = match &prev {
                            None => xi,
                            Some(p) => p * rho + xi * innovation,
                        };
                        prev = Some(w.clone());
                        seq.push(w);
                    }
                    seq
                })
                .collect()
        })
        .collect();
    let kind = if rho == 0.0 { "gaussian-iid".to_string() } else { format!("gaussian-ar1({rho})") };
    DisturbanceDataset::new(sequences, horizon, Provenance::Generated { seed, kind }).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_reproduces() {
        let a = generate_gaussian(&[2, 1], 5, 0.05, 7, 99);
        let b = generate_gaussian(&[2, 1], 5, 0.05, 7, 99);
        assert_eq!(a, b);
        let c = generate_gaussian(&[2, 1], 5, 0.05, 7, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_variance_near_nominal() {
        let ds = generate_gaussian(&[1], 100, 0.05, 1000, 4);
        let mut vals = Vec::new();
        for s in 0..ds.num_samples() {
            for t in 0..ds.horizon {
                vals.push(ds.sample(0, s)[t][0]);
            }
        }
        assert_eq!(vals.len(), 100_000);
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((var - 0.05).abs() / 0.05 < 0.02, "sample variance {var}");
    }

    #[test]
    fn split_matches_scenario_counts() {
        // 100 calibration + 100 training sequences plus the test point
        let split = DatasetSplit::new(100, 201).unwrap();
        assert_eq!(split.indices(SplitPart::Calibration).len(), 100);
        assert_eq!(split.indices(SplitPart::Training).len(), 100);
        assert_eq!(split.indices(SplitPart::Test), vec![0]);
        // disjoint and exhaustive
        let mut all = split.indices(SplitPart::Test);
        all.extend(split.indices(SplitPart::Calibration));
        all.extend(split.indices(SplitPart::Training));
        all.sort_unstable();
        assert_eq!(all, (0..201).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_split_rejected() {
        assert!(matches!(DatasetSplit::new(5, 7), Err(DataError::BadSplit { .. })));
        assert!(DatasetSplit::new(5, 8).is_ok());
    }

    #[test]
    fn ar1_is_stationary_and_correlated() {
        let rho = 0.6;
        let ds = generate_gaussian_ar1(&[1], 50, 0.05, rho, 2000, 12);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut sq = 0.0;
        let mut n = 0usize;
        for s in 0..ds.num_samples() {
            let seq = ds.sample(0, s);
            for t in 1..seq.len() {
                num += seq[t][0] * seq[t - 1][0];
                den += 1.0;
            }
            for v in seq {
                sq += v[0] * v[0];
                n += 1;
            }
        }
        let var = sq / n as f64;
        let lag1 = (num / den) / var;
        assert!((var - 0.05).abs() / 0.05 < 0.05, "stationary variance {var}");
        assert!((lag1 - rho).abs() < 0.05, "lag-1 correlation {lag1}");
    }
}
