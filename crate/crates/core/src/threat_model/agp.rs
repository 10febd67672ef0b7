use super::{AttackGraph, NodeId, NodeKind};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgpError {
    #[error("attack graph contains a cycle")]
    Cycle,
    #[error("rule node {0} has no base score")]
    MissingScore(NodeId),
    #[error("score {value} of node {node} is outside [0,1]")]
    OutOfRange { node: NodeId, value: f64 },
}

/// Cumulative attack-graph probabilities.
///
/// Rule nodes multiply their base score with the AGP of every prerequisite;
/// derived nodes combine their incoming rules by noisy-OR; condition nodes
/// take their fact score, 1.0 when absent. Base scores come from `base`, then
/// from the node's own score annotation.
pub fn agp(
    graph: &AttackGraph,
    base: &BTreeMap<NodeId, f64>,
    fact_scores: &BTreeMap<NodeId, f64>,
) -> Result<BTreeMap<NodeId, f64>, AgpError> {
    let order = graph.topological_order().ok_or(AgpError::Cycle)?;
    let check = |node, value: f64| {
        if (0.0..=1.0).contains(&value) {
            Ok(value)
        } else {
            Err(AgpError::OutOfRange { node, value })
        }
    };
    let mut out = BTreeMap::new();
    for id in order {
        let node = &graph.nodes[&id];
        let value = match node.kind {
            NodeKind::Condition => check(
                id,
                fact_scores.get(&id).copied().or(node.score).unwrap_or(1.0),
            )?,
            NodeKind::Rule => {
                let b = base
                    .get(&id)
                    .copied()
                    .or(node.score)
                    .ok_or(AgpError::MissingScore(id))?;
                graph
                    .pred(id)
                    .iter()
                    .fold(check(id, b)?, |acc, p| acc * out[p])
            }
            NodeKind::Derived => {
                1.0 - graph
                    .pred(id)
                    .iter()
                    .fold(1.0, |acc, r| acc * (1.0 - out[r]))
            }
        };
        out.insert(id, value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{Node, NodeKind};
    use super::*;

    fn graph(nodes: &[(NodeId, NodeKind, Option<f64>)], edges: &[(NodeId, NodeId)]) -> AttackGraph {
        AttackGraph {
            nodes: nodes
                .iter()
                .map(|&(id, kind, score)| {
                    (
                        id,
                        Node {
                            id,
                            kind,
                            label: format!("n{id}"),
                            score,
                            cost: None,
                            damage: None,
                        },
                    )
                })
                .collect(),
            edges: edges.iter().copied().collect(),
            goal: 1,
        }
    }

    #[test]
    fn chain_multiplies_rule_scores() {
        use NodeKind::*;
        let g = graph(
            &[
                (1, Derived, None),
                (2, Rule, Some(0.74)),
                (4, Derived, None),
                (11, Rule, Some(0.92)),
                (12, Condition, None),
                (3, Condition, None),
            ],
            &[(12, 11), (11, 4), (4, 2), (3, 2), (2, 1)],
        );
        let v = agp(&g, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(v[&3], 1.0);
        assert!((v[&2] - 0.6808).abs() < 1e-12);
        assert!((v[&1] - 0.6808).abs() < 1e-12);
    }

    #[test]
    fn noisy_or_at_derived_nodes() {
        use NodeKind::*;
        let g = graph(
            &[
                (1, Derived, None),
                (2, Rule, Some(0.5)),
                (3, Rule, Some(0.5)),
                (4, Condition, None),
            ],
            &[(4, 2), (4, 3), (2, 1), (3, 1)],
        );
        let v = agp(&g, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert!((v[&1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        use NodeKind::*;
        let cyclic = graph(
            &[(1, Derived, None), (2, Rule, Some(0.5))],
            &[(1, 2), (2, 1)],
        );
        assert_eq!(
            agp(&cyclic, &BTreeMap::new(), &BTreeMap::new()),
            Err(AgpError::Cycle)
        );
        let unscored = graph(
            &[(1, Derived, None), (2, Rule, None), (3, Condition, None)],
            &[(3, 2), (2, 1)],
        );
        assert_eq!(
            agp(&unscored, &BTreeMap::new(), &BTreeMap::new()),
            Err(AgpError::MissingScore(2))
        );
        let base = BTreeMap::from([(2, 1.5)]);
        assert!(matches!(
            agp(&unscored, &base, &BTreeMap::new()),
            Err(AgpError::OutOfRange { node: 2, .. })
        ));
    }
}
