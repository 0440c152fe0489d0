use super::ast::{StlFormula, Trace};
use super::StlError;

fn check_length(f: &StlFormula, tr: &Trace, t: usize) -> Result<(), StlError> {
    let horizon = f.horizon();
    let needed = t + horizon;
    if tr.is_empty() || needed > tr.len() - 1 {
        return Err(StlError::TraceTooShort { len: tr.len(), needed, t, horizon });
    }
    Ok(())
}

/// Boolean satisfaction of `f` on `tr` at time `t`.
///
/// Until is existential in the witness time and universal on the left
/// operand over the closed interval `[t, tau]`.
pub fn eval_boolean(f: &StlFormula, tr: &Trace, t: usize) -> Result<bool, StlError> {
    check_length(f, tr, t)?;
    Ok(bool_rec(f, tr, t))
}

fn bool_rec(f: &StlFormula, tr: &Trace, t: usize) -> bool {
    match f {
        StlFormula::True => true,
        StlFormula::Pred(p) => p.value(tr.sample(t), tr.layout()) >= 0.0,
        StlFormula::Not(c) => !bool_rec(c, tr, t),
        StlFormula::And(cs) => cs.iter().all(|c| bool_rec(c, tr, t)),
        StlFormula::Or(cs) => cs.iter().any(|c| bool_rec(c, tr, t)),
        StlFormula::Eventually { a, b, child } => {
            (t + a..=t + b).any(|tau| bool_rec(child, tr, tau))
        }
        StlFormula::Always { a, b, child } => {
            (t + a..=t + b).all(|tau| bool_rec(child, tr, tau))
        }
        StlFormula::Until { a, b, lhs, rhs } => (t + a..=t + b).any(|tau| {
            bool_rec(rhs, tr, tau) && (t..=tau).all(|tp| bool_rec(lhs, tr, tp))
        }),
    }
}

/// Quantitative robustness of `f` on `tr` at time `t`.
///
/// Sign-sound with respect to [`eval_boolean`]: a strictly positive value
/// implies satisfaction and a strictly negative value implies violation;
/// exact zeros count as satisfaction.
pub fn eval_robustness(f: &StlFormula, tr: &Trace, t: usize) -> Result<f64, StlError> {
    check_length(f, tr, t)?;
    Ok(rob_rec(f, tr, t))
}

fn rob_rec(f: &StlFormula, tr: &Trace, t: usize) -> f64 {
    match f {
        StlFormula::True => f64::INFINITY,
        StlFormula::Pred(p) => p.value(tr.sample(t), tr.layout()),
        StlFormula::Not(c) => -rob_rec(c, tr, t),
        StlFormula::And(cs) => cs
            .iter()
            .map(|c| rob_rec(c, tr, t))
            .fold(f64::INFINITY, f64::min),
        StlFormula::Or(cs) => cs
            .iter()
            .map(|c| rob_rec(c, tr, t))
            .fold(f64::NEG_INFINITY, f64::max),
        StlFormula::Eventually { a, b, child } => (t + a..=t + b)
            .map(|tau| rob_rec(child, tr, tau))
            .fold(f64::NEG_INFINITY, f64::max),
        StlFormula::Always { a, b, child } => (t + a..=t + b)
            .map(|tau| rob_rec(child, tr, tau))
            .fold(f64::INFINITY, f64::min),
        StlFormula::Until { a, b, lhs, rhs } => {
            // max over tau of min(rhs(tau), min_{t <= tp <= tau} lhs(tp));
            // the running left minimum is threaded through the scan.
            let mut running_lhs = f64::INFINITY;
            for tp in t..t + a {
                running_lhs = running_lhs.min(rob_rec(lhs, tr, tp));
            }
            let mut best = f64::NEG_INFINITY;
            for tau in t + a..=t + b {
                running_lhs = running_lhs.min(rob_rec(lhs, tr, tau));
                best = best.max(rob_rec(rhs, tr, tau).min(running_lhs));
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::ast::Predicate;
    use super::*;

    fn pred_ge(thresh: f64) -> StlFormula {
        // x >= thresh
        StlFormula::Pred(Predicate::scalar(0, 1.0, -thresh))
    }

    #[test]
    fn predicate_boolean() {
        let f = pred_ge(0.0);
        let tr = Trace::scalar("x", &[-1.0, 1.0]);
        assert!(!eval_boolean(&f, &tr, 0).unwrap());
        assert!(eval_boolean(&f, &tr, 1).unwrap());
    }

    #[test]
    fn eventually_boolean() {
        let f = StlFormula::eventually(0, 2, pred_ge(0.0));
        let tr = Trace::scalar("x", &[-1.0, -1.0, 1.0]);
        assert!(eval_boolean(&f, &tr, 0).unwrap());
    }

    #[test]
    fn until_boolean_cases() {
        let f = StlFormula::until(0, 2, pred_ge(0.0), pred_ge(5.0));
        let sat = Trace::scalar("x", &[1.0, 2.0, 6.0]);
        assert!(eval_boolean(&f, &sat, 0).unwrap());
        // left clause broken at tau' = 1 before the witness
        let unsat = Trace::scalar("x", &[1.0, -2.0, 6.0]);
        assert!(!eval_boolean(&f, &unsat, 0).unwrap());
    }

    #[test]
    fn always_robustness() {
        let f = StlFormula::always(0, 2, pred_ge(0.0));
        let tr = Trace::scalar("x", &[1.0, 2.0, 3.0]);
        assert_eq!(eval_robustness(&f, &tr, 0).unwrap(), 1.0);
    }

    #[test]
    fn eventually_robustness() {
        let f = StlFormula::eventually(0, 2, pred_ge(0.0));
        let tr = Trace::scalar("x", &[-1.0, -1.0, 1.0]);
        assert_eq!(eval_robustness(&f, &tr, 0).unwrap(), 1.0);
    }

    #[test]
    fn until_robustness() {
        // brute-force over witness times by hand gives 1 for (1,2,6)
        let f = StlFormula::until(0, 2, pred_ge(0.0), pred_ge(5.0));
        let tr = Trace::scalar("x", &[1.0, 2.0, 6.0]);
        assert_eq!(eval_robustness(&f, &tr, 0).unwrap(), 1.0);
        let tr2 = Trace::scalar("x", &[1.0, -2.0, 6.0]);
        assert_eq!(eval_robustness(&f, &tr2, 0).unwrap(), -2.0);
    }

    #[test]
    fn trace_too_short() {
        let f = StlFormula::always(0, 4, pred_ge(0.0));
        let tr = Trace::scalar("x", &[1.0, 1.0]);
        assert!(matches!(
            eval_boolean(&f, &tr, 0),
            Err(StlError::TraceTooShort { .. })
        ));
    }

    #[test]
    fn horizon_recursion() {
        let f = pred_ge(0.0);
        assert_eq!(f.horizon(), 0);
        let g = StlFormula::always(0, 2, pred_ge(0.0));
        assert_eq!(g.horizon(), 2);
        let u = StlFormula::until(1, 3, pred_ge(0.0), StlFormula::eventually(0, 2, pred_ge(1.0)));
        assert_eq!(u.horizon(), 3 + 2);
        let n = StlFormula::not(u);
        assert_eq!(n.horizon(), 5);
    }
}
