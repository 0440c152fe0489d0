use std::time::Instant;
fn main() {
    let sc = stlmas_core::config::load(std::path::Path::new("configs/trio.toml")).unwrap();
    let gains_artifact = stlmas_core::pipeline::load_gains(std::path::Path::new("/tmp/smoke/trio_gains.json")).unwrap();
    let regions = stlmas_core::pipeline::load_regions(std::path::Path::new("/tmp/smoke/trio_regions.json")).unwrap();
    let tightened = stlmas_core::pipeline::tightened_spec(&sc, &regions).unwrap();
    let t0 = Instant::now();
    let (inputs, states) = stlmas_core::pipeline::initial_plans(&sc, &tightened).unwrap();
    println!("initial plans: {:?}", t0.elapsed());
    let gains = gains_artifact.to_gains().unwrap();
    let t1 = Instant::now();
    let mut n_steps = 0usize;
    for run in 0..10u64 {
        let realization = stlmas_core::pipeline::realization_from_seed(&sc, 1000 + run);
        let trace = stlmas_core::pipeline::run_one(&sc, &gains, &tightened, &inputs, &states, &realization, stlmas_core::runtime::ExecutionMode::Distributed).unwrap();
        n_steps += trace.steps.iter().map(|s| s.solved.len()).sum::<usize>();
    }
    println!("10 runs: {:?} ({} solves total)", t1.elapsed(), n_steps);
}
