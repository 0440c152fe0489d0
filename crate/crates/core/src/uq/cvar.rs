use super::UqError;

/// Empirical value-at-risk: the `ceil(n (1-theta))`-th smallest score.
pub fn empirical_var(scores: &[f64], theta: f64) -> Result<f64, UqError> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(UqError::ThetaOutOfRange(theta));
    }
    if scores.is_empty() {
        return Err(UqError::EmptyScores);
    }
    let n = scores.len();
    let p = (((n as f64) * (1.0 - theta)) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[p.min(n) - 1])
}

/// Empirical conditional value-at-risk at confidence `1 - theta`:
/// `min_eta eta + (1/(n theta)) sum (s_i - eta)_+` on the sample.
///
/// The objective is convex piecewise-linear in `eta` with breakpoints at the
/// sample values, so scanning the samples is exact.
pub fn empirical_cvar(scores: &[f64], theta: f64) -> Result<f64, UqError> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(UqError::ThetaOutOfRange(theta));
    }
    if scores.is_empty() {
        return Err(UqError::EmptyScores);
    }
    Ok(cvar_with_scale(scores, scores.len() as f64 * theta))
}

/// `min_eta eta + (1/scale) sum (s_i - eta)_+` with an explicit tail scale;
/// shared by the training objective, whose scale follows the sample count
/// minus one rather than the sample count.
pub fn cvar_with_scale(scores: &[f64], scale: f64) -> f64 {
    assert!(scale > 0.0, "tail scale must be positive");
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    // suffix sums: tail(i) = sum_{j >= i} sorted[j]
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + sorted[i];
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        let eta = sorted[i];
        // all strictly larger values contribute
        let count = n - i - sorted[i..].iter().take_while(|&&v| v == eta).count();
        let excess = tail[n - count] - eta * count as f64;
        best = best.min(eta + excess / scale);
    }
    best
}
