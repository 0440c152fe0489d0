//! Plot-data emission: everything an external plotting tool needs, nothing
//! more. Histogram bins as JSON, per-run robustness and first-run
//! trajectories as CSV.

use std::io::Write;
use std::path::Path;

use stlmas_core::config::Scenario;
use stlmas_core::pipeline::{PipelineError, VerifyOutput};

pub fn write_plot_data(
    dir: &Path,
    sc: &Scenario,
    output: &VerifyOutput,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    // selection frequency histogram
    let hist = serde_json::json!({
        "agents": (0..sc.system.num_agents())
            .map(|i| sc.system.layout.name(i).to_string())
            .collect::<Vec<_>>(),
        "counts": output.artifact.selection_counts,
    });
    std::fs::write(
        dir.join("selection_histogram.json"),
        format!("{}\n", serde_json::to_string_pretty(&hist).expect("serializable")),
    )?;
    // per-run robustness
    let mut rob = std::fs::File::create(dir.join("robustness.csv"))?;
    writeln!(rob, "run,robustness,satisfied,contained")?;
    for (i, r) in output.runs.iter().enumerate() {
        writeln!(
            rob,
            "{},{},{},{}",
            i,
            r.trace.robustness,
            r.trace.verdict as u8,
            r.contained as u8
        )?;
    }
    // first-run trajectory polylines
    if let Some(first) = output.runs.first() {
        let mut traj = std::fs::File::create(dir.join("trajectories.csv"))?;
        let max_dim = sc.system.agents.iter().map(|a| a.state_dim()).max().unwrap_or(0);
        let dims: Vec<String> = (0..max_dim).map(|d| format!("dim_{d}")).collect();
        writeln!(traj, "agent,t,{}", dims.join(","))?;
        for (agent, states) in first.trace.states.iter().enumerate() {
            for (t, xs) in states.iter().enumerate() {
                let cells: Vec<String> = (0..max_dim)
                    .map(|d| if d < xs.len() { format!("{}", xs[d]) } else { String::new() })
                    .collect();
                writeln!(traj, "{},{},{}", agent, t, cells.join(","))?;
            }
        }
    }
    Ok(())
}
