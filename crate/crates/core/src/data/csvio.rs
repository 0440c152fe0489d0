//! CSV interchange.
//!
//! Schema: header `agent,sample,t,dim_0,...,dim_{D-1}` where `D` is the
//! largest agent dimension; one row per `(agent, sample, timestep)` with
//! trailing cells left empty for lower-dimensional agents. Agent indices are
//! zero-based. UTF-8, `.` decimal point.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;

use super::dataset::{DisturbanceDataset, Provenance};
use super::DataError;

pub fn export_csv(ds: &DisturbanceDataset, path: &Path) -> Result<(), DataError> {
    let max_dim = (0..ds.num_agents()).map(|a| ds.agent_dim(a)).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
    let mut header = vec!["agent".to_string(), "sample".to_string(), "t".to_string()];
    header.extend((0..max_dim).map(|d| format!("dim_{d}")));
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    for agent in 0..ds.num_agents() {
        let dim = ds.agent_dim(agent);
        for sample in 0..ds.num_samples() {
            for t in 0..ds.horizon {
                let mut row = vec![agent.to_string(), sample.to_string(), t.to_string()];
                let v = &ds.sample(agent, sample)[t];
                for d in 0..max_dim {
                    row.push(if d < dim { format!("{}", v[d]) } else { String::new() });
                }
                w.write_record(&row).map_err(|e| DataError::Csv(e.to_string()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset back, validating against the expected shape.
pub fn ingest_csv(
    path: &Path,
    expected_agents: usize,
    expected_horizon: usize,
    expected_dims: &[usize],
) -> Result<DisturbanceDataset, DataError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
    // cells[(agent, sample)][t] = vector
    let mut cells: BTreeMap<(usize, usize), BTreeMap<usize, DVector<f64>>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        if rec.len() < 4 {
            return Err(DataError::Csv(format!("row has {} fields, expected >= 4", rec.len())));
        }
        let agent: usize = rec[0]
            .parse()
            .map_err(|_| DataError::Csv(format!("bad agent index `{}`", &rec[0])))?;
        let sample: usize = rec[1]
            .parse()
            .map_err(|_| DataError::Csv(format!("bad sample index `{}`", &rec[1])))?;
        let t: usize =
            rec[2].parse().map_err(|_| DataError::Csv(format!("bad timestep `{}`", &rec[2])))?;
        if agent >= expected_agents {
            return Err(DataError::ShapeMismatch(format!(
                "agent index {agent} >= declared agent count {expected_agents}"
            )));
        }
        if t >= expected_horizon {
            return Err(DataError::ShapeMismatch(format!(
                "timestep {t} >= declared horizon {expected_horizon}"
            )));
        }
        let dim = expected_dims[agent];
        let mut vals = Vec::with_capacity(dim);
        for d in 0..dim {
            let cell = rec.get(3 + d).unwrap_or("");
            if cell.is_empty() {
                return Err(DataError::NonNumeric { agent, sample, t, dim: d });
            }
            let v: f64 =
                cell.parse().map_err(|_| DataError::NonNumeric { agent, sample, t, dim: d })?;
            vals.push(v);
        }
        // anything beyond the agent's dimension must be empty padding
        for d in dim..rec.len().saturating_sub(3) {
            if !rec[3 + d].is_empty() {
                return Err(DataError::ShapeMismatch(format!(
                    "agent {agent} declared dimension {dim} but row for t={t} has extra cells"
                )));
            }
        }
        cells.entry((agent, sample)).or_default().insert(t, DVector::from_vec(vals));
    }
    let num_samples = cells.keys().map(|&(_, s)| s + 1).max().unwrap_or(0);
    let mut sequences = Vec::with_capacity(expected_agents);
    for agent in 0..expected_agents {
        let mut per_agent = Vec::with_capacity(num_samples);
        for sample in 0..num_samples {
            let by_t = cells
                .get(&(agent, sample))
                .ok_or(DataError::Ragged { agent, sample, t: 0 })?;
            let mut seq = Vec::with_capacity(expected_horizon);
            for t in 0..expected_horizon {
                let v = by_t.get(&t).ok_or(DataError::Ragged { agent, sample, t })?;
                seq.push(v.clone());
            }
            per_agent.push(seq);
        }
        sequences.push(per_agent);
    }
    DisturbanceDataset::new(
        sequences,
        expected_horizon,
        Provenance::File(path.display().to_string()),
    )
}
