use super::UqError;

/// Guarded ceiling: counters floating-point drift in `(k+1)(1-theta)` so that
/// exact integers are not bumped up a rank.
fn rank_ceil(v: f64) -> usize {
    (v - 1e-9).ceil().max(1.0) as usize
}

/// Split-conformal quantile of a finite score sample at miscoverage `theta`.
///
/// Returns the `p`-th smallest score with `p = ceil((k+1)(1-theta))`, or
/// `+inf` when `p > k` (the finite-sample rank falls past the sample).
pub fn conformal_quantile(scores: &[f64], theta: f64) -> Result<f64, UqError> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(UqError::ThetaOutOfRange(theta));
    }
    if scores.is_empty() {
        return Err(UqError::EmptyScores);
    }
    let k = scores.len();
    let p = rank_ceil((k + 1) as f64 * (1.0 - theta));
    if p > k {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[p - 1])
}

/// Smallest calibration count for which the conformal quantile is finite.
pub fn min_finite_calibration(theta: f64) -> usize {
    let mut k = 1;
    while rank_ceil((k + 1) as f64 * (1.0 - theta)) > k {
        k += 1;
    }
    k
}

/// Tightened level for probably-approximately-correct coverage:
/// `theta_hat = theta - sqrt(ln(1/beta) / (2k))` over `k` calibration draws.
pub fn pac_adjusted_level(theta: f64, beta: f64, k: usize) -> Result<f64, UqError> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(UqError::ThetaOutOfRange(theta));
    }
    if !(0.0..1.0).contains(&beta) || beta == 0.0 {
        return Err(UqError::ThetaOutOfRange(beta));
    }
    let adjustment = ((1.0 / beta).ln() / (2.0 * k as f64)).sqrt();
    if adjustment >= theta {
        return Err(UqError::PacAdjustmentTooLarge { theta, adjustment });
    }
    Ok(theta - adjustment)
}

/// Inverse of the PAC formula: the confidence `1 - beta` delivered by using
/// the tightened `theta_hat` instead of `theta` with `k` samples.
pub fn pac_confidence(theta: f64, theta_hat: f64, k: usize) -> f64 {
    let beta = (-2.0 * k as f64 * (theta - theta_hat).powi(2)).exp();
    1.0 - beta
}
