//! Horn-clause attack models, their grounded attack graphs and AGP scoring.
//!
//! An [`AttackModel`] is parsed from a line-oriented clause format, grounded
//! against a set of facts into an [`AttackGraph`] of condition, derived and
//! rule nodes, and scored with cumulative attack-graph probabilities.

mod agp;
mod ground;
mod mulval;
mod parse;

pub use agp::{agp, AgpError};
pub use ground::{ground, GroundError};
pub use mulval::{export_mulval, import_mulval, MulvalError};
pub use parse::{parse_attack_model, parse_fact, ModelError};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

/// Line/column position inside a source text, both 1-based.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => f.write_str(c),
            Term::Var(v) => f.write_str(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Predicate {
    pub name: String,
    pub args: Vec<Term>,
}

impl Predicate {
    pub fn ground(name: &str, args: &[&str]) -> Self {
        Predicate {
            name: name.to_string(),
            args: args.iter().map(|a| Term::Const(a.to_string())).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HornRule {
    pub id: String,
    pub body: Vec<Predicate>,
    pub head: Predicate,
    pub base_score: f64,
    pub attack_cost: f64,
    pub damage: f64,
    pub span: Span,
}

/// A ground fact with its optional score annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Fact {
    pub atom: Predicate,
    pub score: Option<f64>,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttackModel {
    pub primitives: BTreeSet<String>,
    pub derived: BTreeSet<String>,
    pub rules: Vec<HornRule>,
    pub facts: Vec<Fact>,
    pub arities: BTreeMap<String, usize>,
}

impl AttackModel {
    pub fn is_derived(&self, name: &str) -> bool {
        self.derived.contains(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Condition,
    Derived,
    Rule,
}

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damage: Option<f64>,
}

/// A grounded AND/OR derivation graph.
///
/// Edges run from prerequisites (condition or derived nodes) to rule nodes,
/// and from rule nodes to the single derived node they establish.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AttackGraph {
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
    pub goal: NodeId,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<Node>,
    edges: Vec<[NodeId; 2]>,
    goal: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    Empty,
    UnknownEndpoint { from: NodeId, to: NodeId },
    EdgeTyping { from: NodeId, to: NodeId },
    RuleOutDegree { rule: NodeId, successors: usize },
    RuleWithoutPrerequisites { rule: NodeId },
    Disconnected { components: usize },
    GoalNotDerived { goal: NodeId },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Empty => write!(f, "attack graph has no nodes"),
            Diagnostic::UnknownEndpoint { from, to } => {
                write!(f, "edge {from}->{to} references an unknown node")
            }
            Diagnostic::EdgeTyping { from, to } => write!(
                f,
                "edge {from}->{to} must connect a prerequisite to a rule or a rule to a derived node"
            ),
            Diagnostic::RuleOutDegree { rule, successors } => {
                write!(f, "rule node {rule} has {successors} successors, expected 1")
            }
            Diagnostic::RuleWithoutPrerequisites { rule } => {
                write!(f, "rule node {rule} has no prerequisites")
            }
            Diagnostic::Disconnected { components } => {
                write!(f, "graph has {components} connected components")
            }
            Diagnostic::GoalNotDerived { goal } => {
                write!(f, "goal {goal} is not a derived node")
            }
        }
    }
}

/// Turns a node label into an identifier usable as a state variable or action.
pub fn sanitize(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            ')' | '\'' | '"' => {}
            c if c.is_ascii_alphanumeric() || c == '_' => out.push(c),
            _ => out.push('_'),
        }
    }
    while out.ends_with('_') && out.len() > 1 {
        out.pop();
    }
    if out.is_empty() || out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, 'n');
    }
    out
}

impl AttackGraph {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.nodes.get(&id).map(|n| n.kind)
    }

    pub fn pred(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|(_, b)| *b == id)
            .map(|(a, _)| *a)
            .collect()
    }

    pub fn succ(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .range((id, 0)..=(id, NodeId::MAX))
            .map(|(_, b)| *b)
            .collect()
    }

    pub fn nodes_of(&self, kind: NodeKind) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind == kind)
            .map(|n| n.id)
            .collect()
    }

    pub fn rule_nodes(&self) -> Vec<NodeId> {
        self.nodes_of(NodeKind::Rule)
    }

    /// The derived node a rule node establishes.
    pub fn consequence(&self, rule: NodeId) -> Option<NodeId> {
        self.succ(rule).into_iter().next()
    }

    /// State-variable names of condition and derived nodes.
    ///
    /// Names are sanitized labels; a collision is resolved by suffixing the
    /// node id to every colliding name.
    pub fn capability_names(&self) -> BTreeMap<NodeId, String> {
        self.unique_names(|k| k != NodeKind::Rule)
    }

    /// Action labels of rule nodes, made unique by suffixing the node id.
    pub fn action_labels(&self) -> BTreeMap<NodeId, String> {
        self.unique_names(|k| k == NodeKind::Rule)
    }

    /// Action type of a rule node: its sanitized rule label.
    pub fn action_type(&self, rule: NodeId) -> Option<String> {
        self.nodes.get(&rule).map(|n| sanitize(&n.label))
    }

    fn unique_names(&self, keep: impl Fn(NodeKind) -> bool) -> BTreeMap<NodeId, String> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for n in self.nodes.values().filter(|n| keep(n.kind)) {
            *counts.entry(sanitize(&n.label)).or_default() += 1;
        }
        self.nodes
            .values()
            .filter(|n| keep(n.kind))
            .map(|n| {
                let base = sanitize(&n.label);
                let name = if counts[&base] > 1 {
                    format!("{base}_{}", n.id)
                } else {
                    base
                };
                (n.id, name)
            })
            .collect()
    }

    /// Structural checks; an empty result means the graph is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_graph(self)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            goal: self.goal,
        };
        serde_json::to_string_pretty(&doc).expect("graph serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let doc: GraphJson = serde_json::from_str(text)?;
        Ok(AttackGraph {
            nodes: doc.nodes.into_iter().map(|n| (n.id, n)).collect(),
            edges: doc.edges.into_iter().map(|[a, b]| (a, b)).collect(),
            goal: doc.goal,
        })
    }

    /// Returns true if the graph has a directed cycle.
    pub fn has_cycle(&self) -> bool {
        self.topological_order().is_none()
    }

    pub(crate) fn topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indeg: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        for (_, b) in &self.edges {
            if let Some(d) = indeg.get_mut(b) {
                *d += 1;
            }
        }
        let mut queue: VecDeque<NodeId> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = queue.pop_front() {
            order.push(n);
            for s in self.succ(n) {
                if let Some(d) = indeg.get_mut(&s) {
                    *d -= 1;
                    if *d == 0 {
                        queue.push_back(s);
                    }
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

/// Checks connectivity, edge typing and rule out-degree.
pub fn validate_graph(graph: &AttackGraph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if graph.nodes.is_empty() {
        diags.push(Diagnostic::Empty);
        return diags;
    }
    for &(a, b) in &graph.edges {
        match (graph.kind(a), graph.kind(b)) {
            (Some(NodeKind::Condition | NodeKind::Derived), Some(NodeKind::Rule))
            | (Some(NodeKind::Rule), Some(NodeKind::Derived)) => {}
            (Some(_), Some(_)) => diags.push(Diagnostic::EdgeTyping { from: a, to: b }),
            _ => diags.push(Diagnostic::UnknownEndpoint { from: a, to: b }),
        }
    }
    for r in graph.rule_nodes() {
        let n = graph.succ(r).len();
        if n != 1 {
            diags.push(Diagnostic::RuleOutDegree {
                rule: r,
                successors: n,
            });
        }
        if graph.pred(r).is_empty() {
            diags.push(Diagnostic::RuleWithoutPrerequisites { rule: r });
        }
    }
    if graph.kind(graph.goal) != Some(NodeKind::Derived) {
        diags.push(Diagnostic::GoalNotDerived { goal: graph.goal });
    }
    let components = count_components(graph);
    if components > 1 {
        diags.push(Diagnostic::Disconnected { components });
    }
    diags
}

fn count_components(graph: &AttackGraph) -> usize {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(a, b) in &graph.edges {
        if graph.nodes.contains_key(&a) && graph.nodes.contains_key(&b) {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
    }
    let mut seen = BTreeSet::new();
    let mut components = 0;
    for &start in graph.nodes.keys() {
        if !seen.insert(start) {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for &m in adj.get(&n).into_iter().flatten() {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, kind: NodeKind, label: &str) -> Node {
        Node {
            id,
            kind,
            label: label.into(),
            score: None,
            cost: None,
            damage: None,
        }
    }

    fn tiny() -> AttackGraph {
        AttackGraph {
            nodes: [
                node(1, NodeKind::Derived, "goal(x)"),
                node(2, NodeKind::Rule, "r"),
                node(3, NodeKind::Condition, "fact(x)"),
            ]
            .into_iter()
            .map(|n| (n.id, n))
            .collect(),
            edges: [(3, 2), (2, 1)].into_iter().collect(),
            goal: 1,
        }
    }

    #[test]
    fn sanitize_matches_capability_naming() {
        assert_eq!(
            sanitize("networkServiceInfo(plycent03,,centos7.5)"),
            "networkServiceInfo_plycent03__centos7_5"
        );
        assert_eq!(sanitize("systemDown(plycent03)"), "systemDown_plycent03");
        assert_eq!(sanitize("RULE 2 (remote exploit)"), "RULE_2__remote_exploit");
        assert_eq!(sanitize("22"), "n22");
    }

    #[test]
    fn valid_graph_has_no_diagnostics() {
        assert!(tiny().validate().is_empty());
    }

    #[test]
    fn rule_with_two_successors_is_flagged() {
        let mut g = tiny();
        g.nodes.insert(4, node(4, NodeKind::Derived, "other"));
        g.edges.insert((2, 4));
        assert!(g
            .validate()
            .contains(&Diagnostic::RuleOutDegree { rule: 2, successors: 2 }));
    }

    #[test]
    fn disconnected_components_are_flagged() {
        let mut g = tiny();
        g.nodes.insert(10, node(10, NodeKind::Derived, "a"));
        g.nodes.insert(11, node(11, NodeKind::Rule, "b"));
        g.nodes.insert(12, node(12, NodeKind::Condition, "c"));
        g.edges.insert((12, 11));
        g.edges.insert((11, 10));
        assert!(g
            .validate()
            .contains(&Diagnostic::Disconnected { components: 2 }));
    }

    #[test]
    fn bad_edge_typing_is_flagged() {
        let mut g = tiny();
        g.edges.insert((3, 1));
        assert!(g
            .validate()
            .contains(&Diagnostic::EdgeTyping { from: 3, to: 1 }));
    }

    #[test]
    fn json_round_trip() {
        let g = tiny();
        let back = AttackGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), g.to_json());
    }

    #[test]
    fn colliding_names_get_node_suffix() {
        let mut g = tiny();
        g.nodes.insert(5, node(5, NodeKind::Rule, "r"));
        let labels = g.action_labels();
        assert_eq!(labels[&2], "r_2");
        assert_eq!(labels[&5], "r_5");
    }
}
