use nalgebra::DVector;

/// First-order minimizer settings.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-8, memory: 8 }
    }
}

/// Limited-memory BFGS with Armijo backtracking.
///
/// Returns `(x, f(x), iterations)`. Deterministic; falls back to steepest
/// descent whenever the curvature pair is unusable.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, opts: &OptimOptions) -> (DVector<f64>, f64, usize)
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    if n == 0 {
        let (v, _) = f(&x0);
        return (x0, v, 0);
    }
    let mut x = x0;
    let (mut fx, mut gx) = f(&x);
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iters = 0;
    for _ in 0..opts.max_iters {
        let gnorm = gx.norm();
        if gnorm <= opts.grad_tol * (1.0 + fx.abs()) {
            break;
        }
        // two-loop recursion
        let mut q = gx.clone();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            alphas[i] = rho_hist[i] * s_hist[i].dot(&q);
            q -= &y_hist[i] * alphas[i];
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = s.dot(y) / y.dot(y);
            q *= gamma;
        }
        for i in 0..k {
            let beta = rho_hist[i] * y_hist[i].dot(&q);
            q += &s_hist[i] * (alphas[i] - beta);
        }
        let mut dir = -q;
        if dir.dot(&gx) >= 0.0 {
            dir = -gx.clone();
        }
        // Armijo backtracking
        let slope = dir.dot(&gx);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &x + &dir * step;
            let (fc, gc) = f(&cand);
            if fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s = &xn - &x;
        let y = &gn - &gx;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
        }
        x = xn;
        fx = fn_;
        gx = gn;
        iters += 1;
    }
    (x, fx, iters)
}
