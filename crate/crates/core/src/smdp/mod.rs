//! Symbolic MDPs over boolean variables and their explicit-state expansion.
//!
//! [`attacker_smdp`] turns an attack graph into the attacker's behaviour:
//! one guarded transition per rule node that sets the rule's consequence with
//! the rule's success probability. [`defender_smdp`] reads a defense-rule
//! configuration over the defense-triggering attacker variables.

mod expr;

pub use expr::{parse_expr, Compiled, Expr, ExprError};

use crate::bits::Bits;
use crate::threat_model::{AttackGraph, NodeId, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use thiserror::Error;

pub type Valuation = BTreeMap<String, bool>;
/// Variable assignments; the empty map is the identity update.
pub type Update = BTreeMap<String, bool>;

pub const DEFAULT_STATE_CAP: usize = 5_000_000;
const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmdpError {
    #[error("{context}: unknown variable `{var}`")]
    UnknownVariable { context: String, var: String },
    #[error("action {action}: probabilities sum to {sum}")]
    BadDistribution { action: String, sum: f64 },
    #[error("action {action}: probability {prob} outside (0,1]")]
    BadProbability { action: String, prob: f64 },
    #[error("transition uses undeclared action {0}")]
    UnknownAction(String),
    #[error("initial valuation does not cover variable {0}")]
    InitIncomplete(String),
    #[error("rule node {0} has no success probability")]
    MissingProbability(NodeId),
    #[error("rule node {node}: probability {prob} outside [0,1]")]
    ProbabilityOutOfRange { node: NodeId, prob: f64 },
    #[error("action label {0} is used twice")]
    LabelCollision(String),
    #[error("trigger variable {0} is not an attacker variable")]
    TriggerNotInAttacker(String),
    #[error("defense {action} reads attacker variable {var} outside the trigger set")]
    ReadsUnsharedVar { action: String, var: String },
    #[error("defender initial value of shared variable {0} differs from the attacker's")]
    InitMismatch(String),
    #[error("state cap of {0} exceeded")]
    StateCap(usize),
    #[error("action {0} is enabled twice in one state")]
    Nondeterministic(String),
    #[error("{context}: {source}")]
    Expr { context: String, source: ExprError },
    #[error("defense configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicTransition {
    pub guard: Expr,
    pub action: String,
    pub dist: Vec<(Update, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Smdp {
    pub vars: Vec<String>,
    pub init: Valuation,
    pub actions: BTreeSet<String>,
    pub transitions: Vec<SymbolicTransition>,
    /// Action type used by trigger-set schedulers; actions without an entry
    /// are their own type.
    pub action_types: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardStructure {
    pub name: String,
    pub rewards: BTreeMap<String, f64>,
}

impl RewardStructure {
    pub fn new(name: impl Into<String>) -> Self {
        RewardStructure {
            name: name.into(),
            rewards: BTreeMap::new(),
        }
    }

    pub fn get(&self, action: &str) -> f64 {
        self.rewards.get(action).copied().unwrap_or(0.0)
    }

    /// Sum of two structures under a new name.
    pub fn plus(&self, other: &RewardStructure, name: impl Into<String>) -> RewardStructure {
        let mut rewards = self.rewards.clone();
        for (a, v) in &other.rewards {
            *rewards.entry(a.clone()).or_default() += v;
        }
        RewardStructure {
            name: name.into(),
            rewards,
        }
    }

    pub fn scaled(&self, c: f64) -> RewardStructure {
        RewardStructure {
            name: self.name.clone(),
            rewards: self.rewards.iter().map(|(a, v)| (a.clone(), v * c)).collect(),
        }
    }
}

fn check_dist(action: &str, dist: &[(Update, f64)]) -> Result<(), SmdpError> {
    for &(_, p) in dist {
        if !(p > 0.0 && p <= 1.0) {
            return Err(SmdpError::BadProbability {
                action: action.into(),
                prob: p,
            });
        }
    }
    let sum: f64 = dist.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(SmdpError::BadDistribution {
            action: action.into(),
            sum,
        });
    }
    Ok(())
}

impl Smdp {
    /// Checks declared variables, actions, initial valuation and distributions.
    pub fn validate(&self) -> Result<(), SmdpError> {
        let vars: BTreeSet<&str> = self.vars.iter().map(String::as_str).collect();
        for v in &self.vars {
            if !self.init.contains_key(v) {
                return Err(SmdpError::InitIncomplete(v.clone()));
            }
        }
        for v in self.init.keys() {
            if !vars.contains(v.as_str()) {
                return Err(SmdpError::UnknownVariable {
                    context: "initial valuation".into(),
                    var: v.clone(),
                });
            }
        }
        for t in &self.transitions {
            if !self.actions.contains(&t.action) {
                return Err(SmdpError::UnknownAction(t.action.clone()));
            }
            for v in t.guard.vars() {
                if !vars.contains(v.as_str()) {
                    return Err(SmdpError::UnknownVariable {
                        context: format!("guard of {}", t.action),
                        var: v,
                    });
                }
            }
            for (u, _) in &t.dist {
                for v in u.keys() {
                    if !vars.contains(v.as_str()) {
                        return Err(SmdpError::UnknownVariable {
                            context: format!("update of {}", t.action),
                            var: v.clone(),
                        });
                    }
                }
            }
            check_dist(&t.action, &t.dist)?;
        }
        Ok(())
    }

    pub fn action_type(&self, action: &str) -> String {
        self.action_types
            .get(action)
            .cloned()
            .unwrap_or_else(|| action.to_string())
    }

    pub fn var_index(&self) -> HashMap<&str, usize> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect()
    }

    pub fn init_bits(&self) -> Bits {
        let mut b = Bits::with_len(self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            b.set(i, self.init[v]);
        }
        b
    }

    /// Compiles guards and updates against the variable vector.
    pub fn compile(&self) -> Result<CompiledSmdp, SmdpError> {
        self.validate()?;
        let index = self.var_index();
        let actions: Vec<String> = self.actions.iter().cloned().collect();
        let action_index: HashMap<&str, usize> = actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let transitions = self
            .transitions
            .iter()
            .map(|t| CompiledTransition {
                action: action_index[t.action.as_str()],
                guard: t
                    .guard
                    .compile(&|v| index.get(v).copied())
                    .expect("validated guard"),
                updates: t
                    .dist
                    .iter()
                    .map(|(u, p)| (u.iter().map(|(v, b)| (index[v.as_str()], *b)).collect(), *p))
                    .collect(),
            })
            .collect();
        Ok(CompiledSmdp {
            vars: self.vars.clone(),
            action_types: actions.iter().map(|a| self.action_type(a)).collect(),
            actions,
            init: self.init_bits(),
            transitions,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledTransition {
    pub action: usize,
    pub guard: Compiled,
    pub updates: Vec<(Vec<(usize, bool)>, f64)>,
}

/// An SMDP with guards and updates resolved to variable indices.
///
/// Stepping works on any valuation of the variable vector, so composed games
/// can evaluate a player's moves in substates its standalone expansion never
/// reaches.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledSmdp {
    pub vars: Vec<String>,
    pub actions: Vec<String>,
    pub action_types: Vec<String>,
    pub init: Bits,
    pub transitions: Vec<CompiledTransition>,
}

impl CompiledSmdp {
    pub fn enabled<'a>(&'a self, s: &'a Bits) -> impl Iterator<Item = &'a CompiledTransition> + 'a {
        self.transitions.iter().filter(move |t| t.guard.eval(s))
    }

    pub fn apply(s: &Bits, update: &[(usize, bool)]) -> Bits {
        let mut out = s.clone();
        for &(i, b) in update {
            out.set(i, b);
        }
        out
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }
}

/// Explicit reachable expansion of an [`Smdp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub vars: Vec<String>,
    pub states: Vec<Bits>,
    pub init: usize,
    pub actions: Vec<String>,
    /// Per state: enabled action index and successor distribution.
    pub trans: Vec<Vec<(usize, Vec<(usize, f64)>)>>,
    pub symbolic: CompiledSmdp,
}

impl Mdp {
    pub fn num_transitions(&self) -> usize {
        self.trans.iter().map(Vec::len).sum()
    }

    pub fn valuation(&self, state: usize) -> Valuation {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), self.states[state].get(i)))
            .collect()
    }
}

pub fn expand(smdp: &Smdp) -> Result<Mdp, SmdpError> {
    expand_with_cap(smdp, DEFAULT_STATE_CAP)
}

/// Breadth-first expansion from the initial valuation.
pub fn expand_with_cap(smdp: &Smdp, cap: usize) -> Result<Mdp, SmdpError> {
    let symbolic = smdp.compile()?;
    let mut states = vec![symbolic.init.clone()];
    let mut index: HashMap<Bits, usize> = HashMap::from([(symbolic.init.clone(), 0)]);
    let mut trans = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        let mut choices: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        let cur = states[s].clone();
        for t in symbolic.enabled(&cur) {
            if choices.iter().any(|(a, _)| *a == t.action) {
                return Err(SmdpError::Nondeterministic(symbolic.actions[t.action].clone()));
            }
            let mut dist: Vec<(usize, f64)> = Vec::with_capacity(t.updates.len());
            for (u, p) in &t.updates {
                let next = CompiledSmdp::apply(&cur, u);
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= cap {
                            return Err(SmdpError::StateCap(cap));
                        }
                        let id = states.len();
                        index.insert(next.clone(), id);
                        states.push(next);
                        queue.push_back(id);
                        id
                    }
                };
                match dist.iter_mut().find(|(d, _)| *d == id) {
                    Some(entry) => entry.1 += p,
                    None => dist.push((id, *p)),
                }
            }
            choices.push((t.action, dist));
        }
        trans.push(choices);
    }
    Ok(Mdp {
        vars: smdp.vars.clone(),
        states,
        init: 0,
        actions: symbolic.actions.clone(),
        trans,
        symbolic,
    })
}

fn elide_zero(dist: Vec<(Update, f64)>) -> Vec<(Update, f64)> {
    dist.into_iter().filter(|(_, p)| *p > 0.0).collect()
}

/// Success probability of every rule node: `p` first, then the node's score.
pub fn rule_probabilities(
    graph: &AttackGraph,
    p: &BTreeMap<NodeId, f64>,
) -> Result<BTreeMap<NodeId, f64>, SmdpError> {
    graph
        .rule_nodes()
        .into_iter()
        .map(|r| {
            let prob = p
                .get(&r)
                .copied()
                .or(graph.nodes[&r].score)
                .ok_or(SmdpError::MissingProbability(r))?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(SmdpError::ProbabilityOutOfRange { node: r, prob });
            }
            Ok((r, prob))
        })
        .collect()
}

/// The attacker's behaviour: one transition per rule node.
///
/// Condition capabilities start true and derived ones false; rule `r` is
/// guarded by its prerequisites and the negation of its consequence `e`, and
/// sets `e` with probability `p(r)`.
pub fn attacker_smdp(graph: &AttackGraph, p: &BTreeMap<NodeId, f64>) -> Result<Smdp, SmdpError> {
    let probs = rule_probabilities(graph, p)?;
    let names = graph.capability_names();
    let labels = graph.action_labels();
    let mut vars: Vec<String> = names.values().cloned().collect();
    vars.sort();
    let init = names
        .iter()
        .map(|(id, n)| (n.clone(), graph.kind(*id) == Some(NodeKind::Condition)))
        .collect();
    let mut transitions = Vec::new();
    let mut action_types = BTreeMap::new();
    for (&r, &prob) in &probs {
        let Some(e) = graph.consequence(r) else {
            continue;
        };
        let e = names[&e].clone();
        let mut lits = vec![(e.clone(), false)];
        lits.extend(graph.pred(r).into_iter().map(|q| (names[&q].clone(), true)));
        let action = labels[&r].clone();
        action_types.insert(action.clone(), graph.action_type(r).expect("rule node"));
        transitions.push(SymbolicTransition {
            guard: Expr::conj(lits),
            action,
            dist: elide_zero(vec![
                (Update::new(), 1.0 - prob),
                (Update::from([(e, true)]), prob),
            ]),
        });
    }
    let smdp = Smdp {
        vars,
        init,
        actions: transitions.iter().map(|t| t.action.clone()).collect(),
        transitions,
        action_types,
    };
    smdp.validate()?;
    Ok(smdp)
}

/// Attack-step rewards taken from the rule nodes' `cost` (or `damage`) fields.
pub fn attacker_rewards(graph: &AttackGraph, name: &str, damage: bool) -> RewardStructure {
    let labels = graph.action_labels();
    let mut rs = RewardStructure::new(name);
    for r in graph.rule_nodes() {
        let n = &graph.nodes[&r];
        let v = if damage { n.damage } else { n.cost }.unwrap_or(0.0);
        if v != 0.0 {
            rs.rewards.insert(labels[&r].clone(), v);
        }
    }
    rs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseUpdate {
    #[serde(default)]
    pub assign: BTreeMap<String, bool>,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseRule {
    pub name: String,
    pub guard: String,
    pub updates: Vec<DefenseUpdate>,
    #[serde(default)]
    pub cost: f64,
}

/// Defense rules plus initial values for internal defender variables.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct DefenseSpec {
    pub rules: Vec<DefenseRule>,
    #[serde(default)]
    pub init: BTreeMap<String, bool>,
}

impl DefenseSpec {
    /// Reads either a bare rule array or `{"rules": [...], "init": {...}}`.
    pub fn from_json(text: &str) -> Result<Self, SmdpError> {
        let located = |e: serde_json::Error| {
            SmdpError::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        };
        if text.trim_start().starts_with('[') {
            Ok(DefenseSpec {
                rules: serde_json::from_str(text).map_err(located)?,
                init: BTreeMap::new(),
            })
        } else {
            serde_json::from_str(text).map_err(located)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    fn parsed_guards(&self) -> Result<Vec<Expr>, SmdpError> {
        self.rules
            .iter()
            .map(|r| {
                parse_expr(&r.guard).map_err(|source| SmdpError::Expr {
                    context: format!("guard of defense {}", r.name),
                    source,
                })
            })
            .collect()
    }

    /// Attacker variables read or written by some defense rule.
    pub fn referenced_attacker_vars(&self, attacker: &Smdp) -> Result<BTreeSet<String>, SmdpError> {
        let avars: BTreeSet<&String> = attacker.vars.iter().collect();
        let mut out = BTreeSet::new();
        for (rule, guard) in self.rules.iter().zip(self.parsed_guards()?) {
            let mut vs = guard.vars();
            vs.extend(rule.updates.iter().flat_map(|u| u.assign.keys().cloned()));
            out.extend(vs.into_iter().filter(|v| avars.contains(v)));
        }
        Ok(out)
    }

    /// Defense costs as a reward structure.
    pub fn costs(&self, name: &str) -> RewardStructure {
        let mut rs = RewardStructure::new(name);
        for r in &self.rules {
            if r.cost != 0.0 {
                rs.rewards.insert(r.name.clone(), r.cost);
            }
        }
        rs
    }
}

/// The defender's behaviour over the trigger set V_AD and its own variables.
///
/// Variables mentioned by a rule that are not attacker variables become
/// internal defender variables, false unless `spec.init` says otherwise.
pub fn defender_smdp(
    spec: &DefenseSpec,
    attacker: &Smdp,
    triggers: &BTreeSet<String>,
) -> Result<Smdp, SmdpError> {
    let avars: BTreeSet<&String> = attacker.vars.iter().collect();
    for t in triggers {
        if !avars.contains(t) {
            return Err(SmdpError::TriggerNotInAttacker(t.clone()));
        }
    }
    let guards = spec.parsed_guards()?;
    let mut vars: BTreeSet<String> = triggers.clone();
    let mut actions = BTreeSet::new();
    let mut transitions = Vec::new();
    for (rule, guard) in spec.rules.iter().zip(guards) {
        if attacker.actions.contains(&rule.name) || !actions.insert(rule.name.clone()) {
            return Err(SmdpError::LabelCollision(rule.name.clone()));
        }
        let mut mentioned = guard.vars();
        mentioned.extend(rule.updates.iter().flat_map(|u| u.assign.keys().cloned()));
        for v in mentioned {
            if avars.contains(&v) && !triggers.contains(&v) {
                return Err(SmdpError::ReadsUnsharedVar {
                    action: rule.name.clone(),
                    var: v,
                });
            }
            vars.insert(v);
        }
        let dist: Vec<(Update, f64)> = rule
            .updates
            .iter()
            .map(|u| (u.assign.clone(), u.prob))
            .collect();
        let dist = elide_zero(dist);
        check_dist(&rule.name, &dist)?;
        transitions.push(SymbolicTransition {
            guard,
            action: rule.name.clone(),
            dist,
        });
    }
    for v in spec.init.keys() {
        if avars.contains(v) && !triggers.contains(v) {
            return Err(SmdpError::UnknownVariable {
                context: "defender initial valuation".into(),
                var: v.clone(),
            });
        }
        vars.insert(v.clone());
    }
    let mut init = Valuation::new();
    for v in &vars {
        let value = if triggers.contains(v) {
            let a = attacker.init[v];
            if spec.init.get(v).is_some_and(|&d| d != a) {
                return Err(SmdpError::InitMismatch(v.clone()));
            }
            a
        } else {
            spec.init.get(v).copied().unwrap_or(false)
        };
        init.insert(v.clone(), value);
    }
    let smdp = Smdp {
        vars: vars.into_iter().collect(),
        init,
        actions,
        transitions,
        action_types: BTreeMap::new(),
    };
    smdp.validate()?;
    Ok(smdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threat_model::{Node, NodeKind};

    fn single_rule(p: f64) -> AttackGraph {
        let node = |id, kind, label: &str, score| Node {
            id,
            kind,
            label: label.into(),
            score,
            cost: None,
            damage: None,
        };
        AttackGraph {
            nodes: [
                node(1, NodeKind::Derived, "goal", None),
                node(2, NodeKind::Rule, "step", Some(p)),
                node(3, NodeKind::Condition, "fact", None),
            ]
            .into_iter()
            .map(|n| (n.id, n))
            .collect(),
            edges: [(3, 2), (2, 1)].into_iter().collect(),
            goal: 1,
        }
    }

    #[test]
    fn single_rule_expansion() {
        let smdp = attacker_smdp(&single_rule(0.74), &BTreeMap::new()).unwrap();
        let mdp = expand(&smdp).unwrap();
        assert_eq!(mdp.states.len(), 2);
        let (a, dist) = &mdp.trans[mdp.init][0];
        assert_eq!(mdp.actions[*a], "step");
        let goal_state = dist.iter().find(|(s, _)| *s != mdp.init).unwrap();
        assert_eq!(goal_state.1, 0.74);
        let stay = dist.iter().find(|(s, _)| *s == mdp.init).unwrap();
        assert!((stay.1 - 0.26).abs() < 1e-15);
        assert!(mdp.trans[goal_state.0].is_empty());
    }

    #[test]
    fn certain_rule_drops_failure_branch() {
        let smdp = attacker_smdp(&single_rule(1.0), &BTreeMap::new()).unwrap();
        assert_eq!(smdp.transitions[0].dist.len(), 1);
        assert_eq!(smdp.transitions[0].dist[0].1, 1.0);
    }

    #[test]
    fn override_and_missing_probabilities() {
        let g = single_rule(0.5);
        let smdp = attacker_smdp(&g, &BTreeMap::from([(2, 0.25)])).unwrap();
        assert_eq!(smdp.transitions[0].dist[1].1, 0.25);
        let mut g2 = g.clone();
        g2.nodes.get_mut(&2).unwrap().score = None;
        assert_eq!(
            attacker_smdp(&g2, &BTreeMap::new()),
            Err(SmdpError::MissingProbability(2))
        );
    }

    #[test]
    fn empty_smdp_expands_to_one_state() {
        let smdp = Smdp {
            vars: vec!["x".into()],
            init: Valuation::from([("x".into(), true)]),
            actions: BTreeSet::new(),
            transitions: vec![],
            action_types: BTreeMap::new(),
        };
        let mdp = expand(&smdp).unwrap();
        assert_eq!(mdp.states.len(), 1);
        assert!(mdp.trans[0].is_empty());
    }

    #[test]
    fn independent_rules_fill_the_cube() {
        let mut smdp = Smdp {
            vars: vec!["a".into(), "b".into(), "c".into(), "f".into()],
            init: Valuation::from([
                ("a".into(), false),
                ("b".into(), false),
                ("c".into(), false),
                ("f".into(), true),
            ]),
            actions: BTreeSet::new(),
            transitions: vec![],
            action_types: BTreeMap::new(),
        };
        for v in ["a", "b", "c"] {
            smdp.actions.insert(format!("r_{v}"));
            smdp.transitions.push(SymbolicTransition {
                guard: Expr::conj([(v, false), ("f", true)]),
                action: format!("r_{v}"),
                dist: vec![(Update::new(), 0.5), (Update::from([(v.to_string(), true)]), 0.5)],
            });
        }
        assert_eq!(expand(&smdp).unwrap().states.len(), 8);
        assert_eq!(expand_with_cap(&smdp, 5), Err(SmdpError::StateCap(5)));
    }

    #[test]
    fn defender_validation() {
        let attacker = attacker_smdp(&single_rule(0.5), &BTreeMap::new()).unwrap();
        let spec = DefenseSpec::from_json(
            r#"[{"name":"reset","guard":"goal & !alarm","updates":[{"assign":{"goal":false,"alarm":true},"prob":0.85},{"assign":{},"prob":0.15}],"cost":10}]"#,
        )
        .unwrap();
        let triggers = spec.referenced_attacker_vars(&attacker).unwrap();
        assert_eq!(triggers, BTreeSet::from(["goal".to_string()]));
        let d = defender_smdp(&spec, &attacker, &triggers).unwrap();
        assert_eq!(d.vars, vec!["alarm".to_string(), "goal".to_string()]);
        assert_eq!(d.init["goal"], false);

        assert_eq!(
            defender_smdp(&spec, &attacker, &BTreeSet::from(["nope".to_string()])),
            Err(SmdpError::TriggerNotInAttacker("nope".into()))
        );
        assert!(matches!(
            defender_smdp(&spec, &attacker, &BTreeSet::new()),
            Err(SmdpError::ReadsUnsharedVar { .. })
        ));
        let mut clash = spec.clone();
        clash.rules[0].name = "step".into();
        assert_eq!(
            defender_smdp(&clash, &attacker, &triggers),
            Err(SmdpError::LabelCollision("step".into()))
        );
        let mut twice = spec.clone();
        twice.rules.push(spec.rules[0].clone());
        assert_eq!(
            defender_smdp(&twice, &attacker, &triggers),
            Err(SmdpError::LabelCollision("reset".into()))
        );
        let mut bad_init = spec.clone();
        bad_init.init.insert("goal".into(), true);
        assert_eq!(
            defender_smdp(&bad_init, &attacker, &triggers),
            Err(SmdpError::InitMismatch("goal".into()))
        );
        let empty = defender_smdp(&DefenseSpec::default(), &attacker, &BTreeSet::new()).unwrap();
        assert!(empty.transitions.is_empty());
    }

    #[test]
    fn defense_config_errors_are_positioned() {
        let err = DefenseSpec::from_json("[{\"name\": 3}]").unwrap_err();
        assert!(matches!(err, SmdpError::Config(ref m) if m.contains("line 1")));
        let attacker = attacker_smdp(&single_rule(0.5), &BTreeMap::new()).unwrap();
        let spec = DefenseSpec::from_json(
            r#"[{"name":"d","guard":"goal &","updates":[{"assign":{},"prob":1}]}]"#,
        )
        .unwrap();
        assert!(matches!(
            defender_smdp(&spec, &attacker, &BTreeSet::new()),
            Err(SmdpError::Expr { source: ExprError { col: 7, .. }, .. })
        ));
        let spec = DefenseSpec::from_json(
            r#"[{"name":"d","guard":"goal","updates":[{"assign":{},"prob":0.5}]}]"#,
        )
        .unwrap();
        assert!(matches!(
            defender_smdp(&spec, &attacker, &BTreeSet::from(["goal".to_string()])),
            Err(SmdpError::BadDistribution { .. })
        ));
    }
}
