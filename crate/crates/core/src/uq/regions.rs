use super::conformal::{conformal_quantile, min_finite_calibration};
use super::scores::{NonconformityScores, WeightVector};
use super::UqError;
use crate::data::TrajectoryNorm;

/// Calibrated prediction regions: the conformal quantile `q` of calibration
/// scores and per-clique ball radii `q / C`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictionRegions {
    pub theta: f64,
    pub quantile: f64,
    /// `radii[clique] = quantile / C_clique`; infinite entries are flagged
    /// in `degenerate` and excluded from synthesis.
    pub radii: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub norm: TrajectoryNorm,
}

const WEIGHT_FLOOR: f64 = 1e-12;

/// Conformal calibration of the error prediction regions for fixed gains
/// and weights. The weights and gains must have been chosen without looking
/// at the calibration scores.
pub fn calibrate_regions(
    calibration: &NonconformityScores,
    weights: &WeightVector,
    theta: f64,
    norm: TrajectoryNorm,
) -> Result<PredictionRegions, UqError> {
    let q = conformal_quantile(&calibration.values, theta)?;
    if q.is_infinite() {
        return Err(UqError::InfiniteQuantile {
            k1: calibration.values.len(),
            theta,
            needed: min_finite_calibration(theta),
        });
    }
    let mut radii = Vec::with_capacity(weights.len());
    let mut degenerate = Vec::with_capacity(weights.len());
    for &c in &weights.values {
        if c <= WEIGHT_FLOOR {
            radii.push(f64::INFINITY);
            degenerate.push(true);
        } else {
            radii.push(q / c);
            degenerate.push(false);
        }
    }
    Ok(PredictionRegions { theta, quantile: q, radii, degenerate, norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(values: Vec<f64>) -> NonconformityScores {
        let n = values.len();
        NonconformityScores { values, sample_indices: (1..=n).collect() }
    }

    #[test]
    fn quantile_is_max_at_k19() {
        let s = scores((1..=19).map(|v| v as f64).collect());
        let w = WeightVector::new(vec![1.0]).unwrap();
        let r = calibrate_regions(&s, &w, 0.05, TrajectoryNorm::MaxInf).unwrap();
        assert_eq!(r.quantile, 19.0);
        assert_eq!(r.radii, vec![19.0]);
    }

    #[test]
    fn too_small_calibration_is_an_error() {
        let s = scores((1..=10).map(|v| v as f64).collect());
        let w = WeightVector::new(vec![1.0]).unwrap();
        let err = calibrate_regions(&s, &w, 0.05, TrajectoryNorm::MaxInf).unwrap_err();
        match err {
            UqError::InfiniteQuantile { k1, needed, .. } => {
                assert_eq!(k1, 10);
                assert_eq!(needed, 19);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn radius_scales_inversely_with_weight() {
        let s = scores((1..=19).map(|v| v as f64).collect());
        let w1 = WeightVector::new(vec![0.25, 0.75]).unwrap();
        let w2 = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let r1 = calibrate_regions(&s, &w1, 0.05, TrajectoryNorm::MaxInf).unwrap();
        let r2 = calibrate_regions(&s, &w2, 0.05, TrajectoryNorm::MaxInf).unwrap();
        // doubling a weight at fixed quantile halves the radius
        assert!((r1.radii[0] - 2.0 * r2.radii[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_flags_degenerate_radius() {
        let s = scores((1..=19).map(|v| v as f64).collect());
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let r = calibrate_regions(&s, &w, 0.05, TrajectoryNorm::MaxInf).unwrap();
        assert!(r.radii[1].is_infinite());
        assert_eq!(r.degenerate, vec![false, true]);
    }
}
