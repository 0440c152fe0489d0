use super::UqError;
use crate::data::ErrorTrajectorySet;

/// Per-clique prediction-region scaling weights: `0 <= C <= 1`, summing to 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
}

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self, UqError> {
        let sum: f64 = values.iter().sum();
        if values.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(UqError::WeightsInvalid(format!("entries outside [0,1]: {values:?}")));
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(UqError::WeightsInvalid(format!("sum {sum} != 1")));
        }
        Ok(Self { values })
    }

    /// Uniform weight over the singleton cliques (zero on collaborative
    /// ones), the prescribed starting point of the training loop. Falls back
    /// to uniform over everything if no singleton cliques exist.
    pub fn initial(collaborative: &[bool]) -> Self {
        let singles = collaborative.iter().filter(|&&c| !c).count();
        if singles == 0 {
            let n = collaborative.len();
            return Self { values: vec![1.0 / n as f64; n] };
        }
        let values = collaborative
            .iter()
            .map(|&c| if c { 0.0 } else { 1.0 / singles as f64 })
            .collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scalar nonconformity scores, one per sample of the originating part.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconformityScores {
    pub values: Vec<f64>,
    pub sample_indices: Vec<usize>,
}

/// Scores each sample as the maximum over cliques of the weighted error
/// trajectory norm.
pub fn score_dataset(
    errors: &ErrorTrajectorySet,
    weights: &WeightVector,
) -> Result<NonconformityScores, UqError> {
    if weights.len() != errors.num_cliques() {
        return Err(UqError::CliqueMismatch {
            expected: errors.num_cliques(),
            got: weights.len(),
        });
    }
    let values = (0..errors.num_samples())
        .map(|j| {
            errors
                .clique_norms
                .iter()
                .zip(&weights.values)
                .map(|(norms, &c)| c * norms[j])
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(NonconformityScores { values, sample_indices: errors.sample_indices.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrajectoryNorm;

    fn set(norms: Vec<Vec<f64>>) -> ErrorTrajectorySet {
        let n = norms[0].len();
        ErrorTrajectorySet {
            clique_norms: norms,
            sample_indices: (0..n).collect(),
            norm: TrajectoryNorm::MaxInf,
        }
    }

    #[test]
    fn weighted_max_over_cliques() {
        let errors = set(vec![vec![2.0], vec![4.0]]);
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let s = score_dataset(&errors, &w).unwrap();
        assert_eq!(s.values, vec![2.0]);
    }

    #[test]
    fn unit_weight_selects_single_clique() {
        let errors = set(vec![vec![2.0, 7.0], vec![4.0, 1.0]]);
        let w = WeightVector::new(vec![0.0, 1.0]).unwrap();
        let s = score_dataset(&errors, &w).unwrap();
        assert_eq!(s.values, vec![4.0, 1.0]);
    }

    #[test]
    fn matches_direct_loop() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let cliques = rng.random_range(1..6);
            let samples = rng.random_range(1..10);
            let norms: Vec<Vec<f64>> = (0..cliques)
                .map(|_| (0..samples).map(|_| rng.random_range(0.0..5.0)).collect())
                .collect();
            let mut raw: Vec<f64> = (0..cliques).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter_mut().for_each(|v| *v /= sum);
            let w = WeightVector::new(raw.clone()).unwrap();
            let s = score_dataset(&set(norms.clone()), &w).unwrap();
            for j in 0..samples {
                let mut expect = 0.0f64;
                for c in 0..cliques {
                    expect = expect.max(raw[c] * norms[c][j]);
                }
                assert!((s.values[j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mismatched_weights_rejected() {
        let errors = set(vec![vec![1.0]]);
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            score_dataset(&errors, &w),
            Err(UqError::CliqueMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn simplex_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.2, -0.2]).is_err());
        let init = WeightVector::initial(&[false, false, true]);
        assert_eq!(init.values, vec![0.5, 0.5, 0.0]);
    }
}
