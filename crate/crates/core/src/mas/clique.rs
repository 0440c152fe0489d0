use nalgebra::DVector;

use super::MasError;
use crate::stl::{AgentId, StlFormula};

/// An agent group sharing one task conjunct, with its bound formula.
///
/// Members are canonically sorted ascending so aggregate coordinate slices
/// are unambiguous. The formula is stored clique-local: predicate bindings
/// are slot indices into `members`, not global agent ids.
#[derive(Debug, Clone)]
pub struct CliqueSpec {
    pub members: Vec<AgentId>,
    pub formula: StlFormula,
}

impl CliqueSpec {
    pub fn new(members: Vec<AgentId>, formula: StlFormula) -> Result<Self, MasError> {
        if members.is_empty()
            || members.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MasError::BadCliqueMembers(members));
        }
        let binding = formula.binding();
        if binding.iter().any(|&slot| slot >= members.len()) {
            return Err(MasError::BindingOutsideClique { binding, members });
        }
        Ok(Self { members, formula })
    }

    pub fn is_collaborative(&self) -> bool {
        self.members.len() > 1
    }

    pub fn validate_horizon(&self, n: usize) -> Result<(), MasError> {
        let horizon = self.formula.horizon();
        if horizon > n {
            return Err(MasError::HorizonTooLong { horizon, n });
        }
        Ok(())
    }
}

/// Interaction structure induced by the clique set: per-agent memberships
/// (the set of cliques containing each agent) and the undirected edge set
/// with self-loops for singleton tasks.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    pub num_agents: usize,
    /// `memberships[i]` lists clique indices containing agent `i`.
    pub memberships: Vec<Vec<usize>>,
    pub edges: Vec<(AgentId, AgentId)>,
}

impl InteractionGraph {
    pub fn build(cliques: &[CliqueSpec], num_agents: usize) -> Result<Self, MasError> {
        let mut memberships = vec![Vec::new(); num_agents];
        let mut edges = std::collections::BTreeSet::new();
        for (ci, clique) in cliques.iter().enumerate() {
            for &m in &clique.members {
                if m >= num_agents {
                    return Err(MasError::MemberOutOfRange { member: m, num_agents });
                }
                memberships[m].push(ci);
            }
            if clique.members.len() == 1 {
                edges.insert((clique.members[0], clique.members[0]));
            } else {
                for (ai, &a) in clique.members.iter().enumerate() {
                    for &b in &clique.members[ai + 1..] {
                        edges.insert((a, b));
                    }
                }
            }
        }
        Ok(Self { num_agents, memberships, edges: edges.into_iter().collect() })
    }

    /// Clique indices shared by two agents.
    pub fn shared_cliques(&self, i: AgentId, j: AgentId) -> Vec<usize> {
        self.memberships[i]
            .iter()
            .copied()
            .filter(|c| self.memberships[j].contains(c))
            .collect()
    }
}

/// Concatenates member samples into the aggregate clique vector.
pub fn aggregate_samples(
    per_agent: &[DVector<f64>],
    members: &[AgentId],
) -> Result<DVector<f64>, MasError> {
    let mut parts = Vec::with_capacity(members.len());
    for &m in members {
        let s = per_agent.get(m).ok_or(MasError::MissingMember(m))?;
        parts.push(s.clone());
    }
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(total);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(&p);
        off += p.len();
    }
    Ok(out)
}

/// Concatenates member trajectories step by step.
pub fn aggregate_trajectories(
    per_agent: &[Vec<DVector<f64>>],
    members: &[AgentId],
) -> Result<Vec<DVector<f64>>, MasError> {
    let len = per_agent
        .get(*members.first().ok_or(MasError::BadCliqueMembers(vec![]))?)
        .ok_or(MasError::MissingMember(members[0]))?
        .len();
    for &m in members {
        let tr = per_agent.get(m).ok_or(MasError::MissingMember(m))?;
        if tr.len() != len {
            return Err(MasError::DimensionMismatch(format!(
                "member {m} trajectory has length {}, expected {len}",
                tr.len()
            )));
        }
    }
    (0..len)
        .map(|t| {
            let step: Vec<DVector<f64>> = per_agent.iter().map(|tr| tr[t].clone()).collect();
            aggregate_samples(&step, members)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_concatenates_in_member_order() {
        let xs = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 2.0)];
        let v = aggregate_samples(&xs, &[0, 1]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn unsorted_members_rejected() {
        let err = CliqueSpec::new(vec![1, 0], StlFormula::True).unwrap_err();
        assert!(matches!(err, MasError::BadCliqueMembers(_)));
        let err = CliqueSpec::new(vec![0, 0], StlFormula::True).unwrap_err();
        assert!(matches!(err, MasError::BadCliqueMembers(_)));
    }

    #[test]
    fn memberships_list_containing_cliques() {
        let cliques = vec![
            CliqueSpec::new(vec![0], StlFormula::True).unwrap(),
            CliqueSpec::new(vec![0, 1], StlFormula::True).unwrap(),
        ];
        let g = InteractionGraph::build(&cliques, 2).unwrap();
        assert_eq!(g.memberships[0], vec![0, 1]);
        assert_eq!(g.memberships[1], vec![1]);
        assert!(g.edges.contains(&(0, 0)));
        assert!(g.edges.contains(&(0, 1)));
    }

    #[test]
    fn ten_agent_memberships() {
        // clique layout of a 10-agent workspace scenario; agent 5 (index 4)
        // belongs to its own task plus (1,5), (4,5), (5,6) and the full group
        let sets: Vec<Vec<usize>> = vec![
            (0..10).collect(),
            vec![0, 1, 2],
            vec![0, 4],
            vec![2, 3],
            vec![3, 4],
            vec![4, 5],
            vec![3, 6],
            vec![5, 7],
            vec![5, 8],
            vec![6, 7],
            vec![7, 9],
            vec![8, 9],
        ];
        let mut cliques: Vec<CliqueSpec> = sets
            .into_iter()
            .map(|m| CliqueSpec::new(m, StlFormula::True).unwrap())
            .collect();
        for i in 0..10 {
            cliques.push(CliqueSpec::new(vec![i], StlFormula::True).unwrap());
        }
        let g = InteractionGraph::build(&cliques, 10).unwrap();
        // agent index 4 = "agent 5" in 1-based labels
        let t5: Vec<usize> = g.memberships[4].clone();
        assert_eq!(t5.len(), 5);
        // every agent has its individual task, so no membership list is empty
        assert!(g.memberships.iter().all(|m| !m.is_empty()));
    }

    #[test]
    fn clique_inf_norm_is_max_of_members() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let t_len = rng.random_range(1..6);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<DVector<f64>> {
                (0..t_len)
                    .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0)))
                    .collect()
            };
            let trs = vec![mk(&mut rng), mk(&mut rng)];
            let agg = aggregate_trajectories(&trs, &[0, 1]).unwrap();
            let norm_agg: f64 =
                agg.iter().map(|s| s.amax()).fold(0.0, f64::max);
            let norm_members: f64 = trs
                .iter()
                .map(|tr| tr.iter().map(|s| s.amax()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            assert!((norm_agg - norm_members).abs() < 1e-15);
        }
    }
}
