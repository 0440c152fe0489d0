use super::ast::{StlFormula, VectorNorm};

/// Lipschitz constant of the robustness function with respect to the
/// trace-space metric `max_t ||.||` in the chosen per-step norm.
///
/// The robustness recursion is built from 1-Lipschitz lattice operations, so
/// the constant is the largest predicate-level constant: the dual norm of the
/// coefficient vector (`||a||_1` for the infinity metric, `||a||_2` for the
/// Euclidean one). Formulas without predicate leaves are constant, hence 0.
pub fn lipschitz_constant(f: &StlFormula, norm: VectorNorm) -> f64 {
    match f {
        StlFormula::True => 0.0,
        StlFormula::Pred(p) => match norm {
            VectorNorm::Inf => p.coeffs.iter().map(|c| c.abs()).sum(),
            VectorNorm::L2 => p.coeffs.norm(),
        },
        StlFormula::Not(c) => lipschitz_constant(c, norm),
        StlFormula::And(cs) | StlFormula::Or(cs) => cs
            .iter()
            .map(|c| lipschitz_constant(c, norm))
            .fold(0.0, f64::max),
        StlFormula::Until { lhs, rhs, .. } => {
            lipschitz_constant(lhs, norm).max(lipschitz_constant(rhs, norm))
        }
        StlFormula::Eventually { child, .. } | StlFormula::Always { child, .. } => {
            lipschitz_constant(child, norm)
        }
    }
}
