//! Log-sum-exp smoothing of the robustness recursion.
//!
//! Minima become soft minima `-(1/beta) ln sum exp(-beta a_i)` (an
//! underapproximation) and maxima become the mirrored soft maxima (an
//! overapproximation). Either way the smoothed value stays within
//! [`smoothing_gap`] of the exact robustness, so `smooth - gap` is a
//! certified lower bound. The gradient is exact for the smoothed function.
//!
//! Gradients are computed in reverse mode over a preorder-indexed flat memo
//! table: a forward pass stores node values per time, a backward pass pushes
//! convex-combination weights down to the predicate leaves into one shared
//! gradient buffer. Child node ids are derived from precomputed subtree
//! sizes, so the hot path is pure array arithmetic.

use nalgebra::DVector;

use super::ast::{StlFormula, Trace};
use super::StlError;

/// Preorder subtree sizes: `sizes[id]` is the node count of the subtree
/// rooted at preorder index `id`.
fn build_sizes(f: &StlFormula, out: &mut Vec<u32>) -> u32 {
    let at = out.len();
    out.push(0);
    let mut total = 1u32;
    match f {
        StlFormula::True | StlFormula::Pred(_) => {}
        StlFormula::Not(c) => total += build_sizes(c, out),
        StlFormula::And(cs) | StlFormula::Or(cs) => {
            for c in cs {
                total += build_sizes(c, out);
            }
        }
        StlFormula::Until { lhs, rhs, .. } => {
            total += build_sizes(lhs, out);
            total += build_sizes(rhs, out);
        }
        StlFormula::Eventually { child, .. } | StlFormula::Always { child, .. } => {
            total += build_sizes(child, out)
        }
    }
    out[at] = total;
    total
}

struct Evaluator<'a> {
    tr: &'a Trace,
    beta: f64,
    sizes: Vec<u32>,
    /// `values[id * len + t]`, NaN = not yet computed. Trace samples are
    /// finite, so NaN is a safe sentinel.
    values: Vec<f64>,
    len: usize,
    grad: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn memo(&self, id: u32, t: usize) -> f64 {
        self.values[id as usize * self.len + t]
    }

    fn value(&mut self, f: &StlFormula, id: u32, t: usize) -> f64 {
        let slot = id as usize * self.len + t;
        let cached = self.values[slot];
        if !cached.is_nan() {
            return cached;
        }
        let v = match f {
            StlFormula::True => f64::INFINITY,
            StlFormula::Pred(p) => p.value(self.tr.sample(t), self.tr.layout()),
            StlFormula::Not(c) => -self.value(c, id + 1, t),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                let is_min = matches!(f, StlFormula::And(_));
                let mut cid = id + 1;
                for c in cs {
                    self.value(c, cid, t);
                    cid += self.sizes[cid as usize];
                }
                self.scratch.clear();
                let mut cid = id + 1;
                for _ in cs {
                    let v = self.memo(cid, t);
                    self.scratch.push(v);
                    cid += self.sizes[cid as usize];
                }
                soft_val(&self.scratch, self.beta, is_min)
            }
            StlFormula::Always { a, b, child } | StlFormula::Eventually { a, b, child } => {
                let is_min = matches!(f, StlFormula::Always { .. });
                for tau in t + a..=t + b {
                    self.value(child, id + 1, tau);
                }
                self.scratch.clear();
                for tau in t + a..=t + b {
                    let v = self.memo(id + 1, tau);
                    self.scratch.push(v);
                }
                soft_val(&self.scratch, self.beta, is_min)
            }
            StlFormula::Until { a, b, lhs, rhs } => {
                let lhs_id = id + 1;
                let rhs_id = lhs_id + self.sizes[lhs_id as usize];
                for tau in t..=t + b {
                    self.value(lhs, lhs_id, tau);
                }
                for tau in t + a..=t + b {
                    self.value(rhs, rhs_id, tau);
                }
                let mut outer = f64::NEG_INFINITY;
                let mut outer_vals = Vec::with_capacity(b - a + 1);
                for tau in t + a..=t + b {
                    let mut inner_min = self.memo(rhs_id, tau);
                    for tp in t..=tau {
                        inner_min = inner_min.min(self.memo(lhs_id, tp));
                    }
                    let inner = if inner_min.is_infinite() {
                        inner_min
                    } else {
                        let mut total = (-self.beta * (self.memo(rhs_id, tau) - inner_min)).exp();
                        for tp in t..=tau {
                            total += (-self.beta * (self.memo(lhs_id, tp) - inner_min)).exp();
                        }
                        inner_min - total.ln() / self.beta
                    };
                    outer_vals.push(inner);
                    outer = outer.max(inner);
                }
                if outer.is_infinite() {
                    outer
                } else {
                    let total: f64 =
                        outer_vals.iter().map(|&v| (self.beta * (v - outer)).exp()).sum();
                    outer + total.ln() / self.beta
                }
            }
        };
        self.values[slot] = v;
        v
    }

    /// Accumulates `mult * d(value at (id, t))/d(trace)` into the gradient.
    fn backward(&mut self, f: &StlFormula, id: u32, t: usize, mult: f64) {
        if mult == 0.0 {
            return;
        }
        match f {
            StlFormula::True => {}
            StlFormula::Pred(p) => {
                let total = self.tr.layout().total_dim();
                let row = t * total;
                let (layout, grad) = (self.tr.layout(), &mut self.grad);
                p.scatter_gradient(mult, layout, &mut grad[row..row + total]);
            }
            StlFormula::Not(c) => self.backward(c, id + 1, t, -mult),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                let is_min = matches!(f, StlFormula::And(_));
                let mut ids = Vec::with_capacity(cs.len());
                let mut cid = id + 1;
                for _ in cs {
                    ids.push(cid);
                    cid += self.sizes[cid as usize];
                }
                self.scratch.clear();
                for &cid in &ids {
                    let v = self.memo(cid, t);
                    self.scratch.push(v);
                }
                let w = soft_weights(&self.scratch, self.beta, is_min);
                for ((c, &cid), wi) in cs.iter().zip(&ids).zip(w) {
                    self.backward(c, cid, t, mult * wi);
                }
            }
            StlFormula::Always { a, b, child } | StlFormula::Eventually { a, b, child } => {
                let is_min = matches!(f, StlFormula::Always { .. });
                self.scratch.clear();
                for tau in t + a..=t + b {
                    let v = self.memo(id + 1, tau);
                    self.scratch.push(v);
                }
                let w = soft_weights(&self.scratch, self.beta, is_min);
                for (k, wi) in w.into_iter().enumerate() {
                    self.backward(child, id + 1, t + a + k, mult * wi);
                }
            }
            StlFormula::Until { a, b, lhs, rhs } => {
                let lhs_id = id + 1;
                let rhs_id = lhs_id + self.sizes[lhs_id as usize];
                // inner soft-min values and outer weights
                let mut inner_vals = Vec::with_capacity(b - a + 1);
                for tau in t + a..=t + b {
                    self.scratch.clear();
                    let v = self.memo(rhs_id, tau);
                    self.scratch.push(v);
                    for tp in t..=tau {
                        let v = self.memo(lhs_id, tp);
                        self.scratch.push(v);
                    }
                    inner_vals.push(soft_val(&self.scratch, self.beta, true));
                }
                let outer_w = soft_weights(&inner_vals, self.beta, false);
                for (k, wo) in outer_w.into_iter().enumerate() {
                    if wo == 0.0 {
                        continue;
                    }
                    let tau = t + a + k;
                    self.scratch.clear();
                    let v = self.memo(rhs_id, tau);
                    self.scratch.push(v);
                    for tp in t..=tau {
                        let v = self.memo(lhs_id, tp);
                        self.scratch.push(v);
                    }
                    let wi = soft_weights(&self.scratch, self.beta, true);
                    self.backward(rhs, rhs_id, tau, mult * wo * wi[0]);
                    for (offset, tp) in (t..=tau).enumerate() {
                        self.backward(lhs, lhs_id, tp, mult * wo * wi[offset + 1]);
                    }
                }
            }
        }
    }
}

fn soft_val(vals: &[f64], beta: f64, is_min: bool) -> f64 {
    let m = if is_min {
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    if m.is_infinite() {
        return m;
    }
    let sign = if is_min { -beta } else { beta };
    let total: f64 = vals.iter().map(|&v| (sign * (v - m)).exp()).sum();
    if is_min {
        m - total.ln() / beta
    } else {
        m + total.ln() / beta
    }
}

fn soft_weights(vals: &[f64], beta: f64, is_min: bool) -> Vec<f64> {
    let m = if is_min {
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    if m.is_infinite() {
        // weights collapse onto the infinite argument(s); gradient is zero
        return vec![0.0; vals.len()];
    }
    let sign = if is_min { -beta } else { beta };
    let raw: Vec<f64> = vals.iter().map(|&v| (sign * (v - m)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Smoothed robustness and its exact gradient with respect to every trace
/// entry, flattened row-major as `t * total_dim + coordinate`.
pub fn smooth_robustness(
    f: &StlFormula,
    tr: &Trace,
    t: usize,
    beta: f64,
) -> Result<(f64, DVector<f64>), StlError> {
    if beta <= 0.0 {
        return Err(StlError::NonPositiveBeta(beta));
    }
    let horizon = f.horizon();
    let needed = t + horizon;
    if tr.is_empty() || needed > tr.len() - 1 {
        return Err(StlError::TraceTooShort { len: tr.len(), needed, t, horizon });
    }
    let mut sizes = Vec::new();
    build_sizes(f, &mut sizes);
    let len = tr.len();
    let n = len * tr.layout().total_dim();
    let mut ev = Evaluator {
        tr,
        beta,
        values: vec![f64::NAN; sizes.len() * len],
        sizes,
        len,
        grad: vec![0.0; n],
        scratch: Vec::with_capacity(64),
    };
    let value = ev.value(f, 0, t);
    ev.backward(f, 0, t, 1.0);
    Ok((value, DVector::from_vec(ev.grad)))
}

/// Worst-case `|smooth - exact|` bound for the given temperature.
///
/// Every soft min/max over `m` arguments deviates at most `ln(m)/beta` from
/// the hard one, and the deviations add along a root-to-leaf path.
pub fn smoothing_gap(f: &StlFormula, beta: f64) -> f64 {
    fn rec(f: &StlFormula) -> f64 {
        match f {
            StlFormula::True | StlFormula::Pred(_) => 0.0,
            StlFormula::Not(c) => rec(c),
            StlFormula::And(cs) | StlFormula::Or(cs) => {
                let child = cs.iter().map(rec).fold(0.0, f64::max);
                (cs.len() as f64).ln() + child
            }
            StlFormula::Always { a, b, child } | StlFormula::Eventually { a, b, child } => {
                ((b - a + 1) as f64).ln() + rec(child)
            }
            StlFormula::Until { a, b, lhs, rhs } => {
                let inner = ((b + 2) as f64).ln() + rec(lhs).max(rec(rhs));
                ((b - a + 1) as f64).ln() + inner
            }
        }
    }
    rec(f) / beta
}
