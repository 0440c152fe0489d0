use super::SynthError;
use crate::data::TrajectoryNorm;
use crate::mas::CliqueSpec;
use crate::stl::{lipschitz_constant, VectorNorm};
use crate::uq::PredictionRegions;

/// One clique's tightening data: the robustness constraint for synthesis is
/// `rho(z) - margin >= 0` with `margin = lipschitz * radius`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TightenedClique {
    pub clique: usize,
    pub lipschitz: f64,
    pub radius: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TightenedSpec {
    pub entries: Vec<TightenedClique>,
    pub norm: VectorNorm,
}

impl TightenedSpec {
    pub fn margin(&self, clique: usize) -> f64 {
        self.entries[clique].margin
    }
}

/// Computes per-clique margins from Lipschitz constants and calibrated
/// radii, in the metric the regions were calibrated in.
pub fn tighten(
    cliques: &[CliqueSpec],
    regions: &PredictionRegions,
) -> Result<TightenedSpec, SynthError> {
    let norm = match regions.norm {
        TrajectoryNorm::MaxInf => VectorNorm::Inf,
        TrajectoryNorm::MaxL2 => VectorNorm::L2,
    };
    let mut entries = Vec::with_capacity(cliques.len());
    for (ci, clique) in cliques.iter().enumerate() {
        let radius = regions.radii[ci];
        if !radius.is_finite() {
            return Err(SynthError::NonFiniteRadius { clique: ci });
        }
        let lipschitz = lipschitz_constant(&clique.formula, norm);
        entries.push(TightenedClique { clique: ci, lipschitz, radius, margin: lipschitz * radius });
    }
    Ok(TightenedSpec { entries, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrajectoryNorm;
    use crate::stl::{Predicate, StlFormula};

    fn regions(radii: Vec<f64>) -> PredictionRegions {
        let degenerate = radii.iter().map(|r| !r.is_finite()).collect();
        PredictionRegions {
            theta: 0.05,
            quantile: 1.0,
            radii,
            degenerate,
            norm: TrajectoryNorm::MaxInf,
        }
    }

    #[test]
    fn margin_is_product() {
        let cliques = vec![CliqueSpec::new(
            vec![0],
            StlFormula::Pred(Predicate::scalar(0, 1.0, 0.0)),
        )
        .unwrap()];
        let spec = tighten(&cliques, &regions(vec![0.9])).unwrap();
        assert_eq!(spec.entries[0].lipschitz, 1.0);
        assert!((spec.entries[0].margin - 0.9).abs() < 1e-15);
    }

    #[test]
    fn constant_formula_has_zero_margin() {
        let cliques = vec![CliqueSpec::new(vec![0], StlFormula::True).unwrap()];
        let spec = tighten(&cliques, &regions(vec![5.0])).unwrap();
        assert_eq!(spec.entries[0].margin, 0.0);
    }

    #[test]
    fn infinite_radius_rejected() {
        let cliques = vec![CliqueSpec::new(
            vec![0],
            StlFormula::Pred(Predicate::scalar(0, 1.0, 0.0)),
        )
        .unwrap()];
        let err = tighten(&cliques, &regions(vec![f64::INFINITY])).unwrap_err();
        assert!(matches!(err, SynthError::NonFiniteRadius { clique: 0 }));
    }
}
