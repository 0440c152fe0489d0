use std::time::Instant;
use nalgebra::DVector;
use stlmas_core::stl::*;

fn main() {
    // proximity-style formula over a 4-dim pair trace, horizon 30
    let near = StlFormula::And(vec![
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![-1.0, 0.0, 1.0, 0.0]), 4.0).unwrap()),
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]), 4.0).unwrap()),
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![0.0, -1.0, 0.0, 1.0]), 4.0).unwrap()),
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]), 4.0).unwrap()),
    ]);
    let f = StlFormula::eventually(0, 30, near);
    let layout = SignalLayout::new(vec!["a".into(), "b".into()], vec![2, 2]);
    let samples: Vec<DVector<f64>> = (0..31).map(|t| DVector::from_fn(4, |i, _| (t as f64 * 0.1 + i as f64 * 0.3).sin())).collect();
    let tr = Trace::new(layout, samples).unwrap();
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..10_000 {
        let (v, g) = smooth_robustness(&f, &tr, 0, 125.0).unwrap();
        acc += v + g[0];
    }
    println!("10k smooth evals: {:?} (acc {acc})", t0.elapsed());
    let t1 = Instant::now();
    for _ in 0..10_000 {
        acc += eval_robustness(&f, &tr, 0).unwrap();
    }
    println!("10k exact evals: {:?} (acc {acc})", t1.elapsed());
}
