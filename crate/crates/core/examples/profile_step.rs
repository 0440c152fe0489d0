use std::time::Instant;
use nalgebra::DVector;
use stlmas_core::synth::*;
use stlmas_core::mas::*;
use stlmas_core::stl::*;

fn main() {
    // replicate a flagship-style step solve for agent 0
    let system = MasSystem::new(
        vec!["x1".into(), "x2".into()],
        vec![AgentDynamics::single_integrator_2d([0.0, 0.0]), AgentDynamics::single_integrator_2d([2.0, 0.0])],
    );
    let horizon = 30;
    let boxes = |lo: [f64;2], hi: [f64;2]| -> StlFormula {
        StlFormula::And(vec![
            StlFormula::Pred(Predicate::new(vec![0], DVector::from_vec(vec![1.0,0.0]), -lo[0]).unwrap()),
            StlFormula::Pred(Predicate::new(vec![0], DVector::from_vec(vec![-1.0,0.0]), hi[0]).unwrap()),
            StlFormula::Pred(Predicate::new(vec![0], DVector::from_vec(vec![0.0,1.0]), -lo[1]).unwrap()),
            StlFormula::Pred(Predicate::new(vec![0], DVector::from_vec(vec![0.0,-1.0]), hi[1]).unwrap()),
        ])
    };
    let individual = StlFormula::And(vec![
        StlFormula::eventually(8, 15, boxes([2.0,2.0],[5.0,5.0])),
        StlFormula::eventually(20, 30, boxes([5.0,6.0],[8.0,9.0])),
    ]);
    let near = StlFormula::And(vec![
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![-1.0, 0.0, 1.0, 0.0]), 4.0).unwrap()),
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]), 4.0).unwrap()),
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![0.0, -1.0, 0.0, 1.0]), 4.0).unwrap()),
        StlFormula::Pred(Predicate::new(vec![0, 1], DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]), 4.0).unwrap()),
    ]);
    let prox = StlFormula::eventually(0, 30, near);
    let trajs: Vec<Vec<DVector<f64>>> = vec![
        (0..=horizon).map(|t| DVector::from_vec(vec![t as f64 * 0.2, t as f64 * 0.25])).collect(),
        (0..=horizon).map(|t| DVector::from_vec(vec![2.0 + t as f64 * 0.2, t as f64 * 0.25])).collect(),
    ];
    let cost = AgentCost::input_energy(2, 1.0);
    let t = 5usize;
    let incumbent: Vec<DVector<f64>> = (t..horizon).map(|_| DVector::from_vec(vec![0.2, 0.25])).collect();
    let light = SynthOptions {
        beta_schedule: vec![125.0],
        restarts: 0,
        lbfgs: OptimOptions { max_iters: 30, ..Default::default() },
        ..Default::default()
    };
    let t0 = Instant::now();
    let n = 200;
    for _ in 0..n {
        let inp = StepInputs {
            system: &system,
            agent: 0,
            t,
            horizon,
            cost: &cost,
            omega: 1000.0,
            trajectories: &trajs,
            incumbent: incumbent.clone(),
            constraints: vec![
                CliqueConstraint { members: vec![0], formula: individual.clone(), margin: 0.8, bound: 0.0, role: CliqueRole::Individual },
                CliqueConstraint { members: vec![0, 1], formula: prox.clone(), margin: 1.6, bound: 0.0, role: CliqueRole::Target },
            ],
        };
        let res = step_plan(inp, &light).unwrap();
        assert!(res.feasible || !res.feasible);
    }
    println!("{n} light step solves: {:?}", t0.elapsed());
}
