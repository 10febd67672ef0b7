//! One-sided partially observable security games and their transformation
//! into perfect-information games.
//!
//! The attacker sees the whole state. The defender observes its own
//! variables and the turn; an attacker action outside the observable set
//! updates only the attacker's copy of shared variables and never hands the
//! turn over. The transformation hides unobservable rules altogether: each
//! observable rule becomes one aggregated action per distinct set of
//! observable prerequisites (DOP) from which it can be reached through
//! hidden steps.

use crate::bits::Bits;
use crate::game::{
    compose_general, ComposeSpec, GameError, Player, Scheduler, StochasticGame, ATTACKER_BLOCKED, DEFAULT_GAME_CAP,
};
use crate::rpatl::{Coalition, StateFormula};
use crate::smdp::{
    attacker_smdp, defender_smdp, rule_probabilities, DefenseSpec, RewardStructure, Smdp, SmdpError,
    SymbolicTransition, Update,
};
use crate::smdp::Expr;
use crate::threat_model::{AttackGraph, NodeId, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoError {
    #[error(transparent)]
    Smdp(#[from] SmdpError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("observable action `{0}` names no rule node")]
    UnknownObservable(String),
    #[error("observation spec: {0}")]
    Config(String),
    #[error("not an ODT game: defense triggers {0:?} are not observable")]
    NotOdt(Vec<String>),
}

/// Which attacker actions the defender can observe, by rule id, action
/// label, or node number.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub observable_actions: Vec<String>,
}

impl ObservationSpec {
    pub fn from_json(text: &str) -> Result<Self, PoError> {
        serde_json::from_str(text).map_err(|e| PoError::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    /// Every rule observable.
    pub fn all(graph: &AttackGraph) -> Self {
        let labels = graph.action_labels();
        ObservationSpec {
            observable_actions: labels.into_values().collect(),
        }
    }

    /// Observable rule nodes. A name matching a rule type selects every
    /// grounding of that rule.
    pub fn resolve(&self, graph: &AttackGraph) -> Result<BTreeSet<NodeId>, PoError> {
        let labels = graph.action_labels();
        let mut out = BTreeSet::new();
        for name in &self.observable_actions {
            let mut hit = false;
            for (&r, l) in &labels {
                let by_type = graph.action_type(r).as_deref() == Some(name.as_str());
                let by_label = l == name || graph.nodes[&r].label == *name;
                let by_id = name.parse::<NodeId>().ok() == Some(r);
                if by_type || by_label || by_id {
                    out.insert(r);
                    hit = true;
                }
            }
            if !hit {
                return Err(PoError::UnknownObservable(name.clone()));
            }
        }
        Ok(out)
    }
}

/// One distinct set of observable prerequisites with the rules on its path.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DopSet {
    pub prereqs: BTreeSet<NodeId>,
    /// Rules applied along the hidden path, the observable rule included.
    pub path: BTreeSet<NodeId>,
}

fn dop_rec(
    graph: &AttackGraph,
    r: NodeId,
    observable: &BTreeSet<NodeId>,
    visited: &BTreeSet<NodeId>,
) -> BTreeSet<DopSet> {
    let mut inner = visited.clone();
    inner.insert(r);
    let mut acc = vec![DopSet {
        prereqs: BTreeSet::new(),
        path: BTreeSet::from([r]),
    }];
    for n in graph.pred(r) {
        let mut options: BTreeSet<DopSet> = BTreeSet::new();
        match graph.kind(n) {
            Some(NodeKind::Derived) => {
                for r2 in graph.pred(n) {
                    if visited.contains(&r2) || r2 == r {
                        continue;
                    }
                    if observable.contains(&r2) {
                        options.insert(DopSet {
                            prereqs: BTreeSet::from([n]),
                            path: BTreeSet::new(),
                        });
                    } else {
                        options.extend(dop_rec(graph, r2, observable, &inner));
                    }
                }
            }
            _ => {
                options.insert(DopSet {
                    prereqs: BTreeSet::from([n]),
                    path: BTreeSet::new(),
                });
            }
        }
        let mut next = Vec::new();
        for a in &acc {
            for o in &options {
                next.push(DopSet {
                    prereqs: a.prereqs.union(&o.prereqs).copied().collect(),
                    path: a.path.union(&o.path).copied().collect(),
                });
            }
        }
        acc = next;
    }
    acc.into_iter().collect()
}

/// Distinct sets of observable prerequisites of rule `r`, ordered by size,
/// then prerequisites, then path.
pub fn do_prerequisites(graph: &AttackGraph, r: NodeId, observable: &BTreeSet<NodeId>) -> Vec<DopSet> {
    let mut v: Vec<DopSet> = dop_rec(graph, r, observable, &BTreeSet::new()).into_iter().collect();
    v.sort_by(|a, b| (a.prereqs.len(), &a.prereqs, &a.path).cmp(&(b.prereqs.len(), &b.prereqs, &b.path)));
    v
}

/// Capabilities the defender can observe: conditions and the consequences
/// of observable rules.
pub fn observable_vars(graph: &AttackGraph, observable: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let mut out: BTreeSet<NodeId> = graph.nodes_of(NodeKind::Condition).into_iter().collect();
    out.extend(observable.iter().filter_map(|&r| graph.consequence(r)));
    out
}

/// The aggregated action an observable attacker transition stands for.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregatedAction {
    pub label: String,
    pub rule: NodeId,
    pub dop: DopSet,
    pub prob: f64,
}

/// The attacker's observable behaviour and its provenance.
#[derive(Clone, Debug)]
pub struct ObservableAttacker {
    pub smdp: Smdp,
    pub actions: Vec<AggregatedAction>,
    pub dops: BTreeMap<NodeId, Vec<DopSet>>,
}

impl ObservableAttacker {
    /// Rewards of aggregated actions: the sum over their path rules.
    /// Entries for other actions are kept as they are.
    pub fn lift_rewards(&self, graph: &AttackGraph, rs: &RewardStructure) -> RewardStructure {
        let labels = graph.action_labels();
        let rule_labels: BTreeSet<&String> = labels.values().collect();
        let mut out = RewardStructure::new(rs.name.clone());
        for (k, v) in &rs.rewards {
            if !rule_labels.contains(k) {
                out.rewards.insert(k.clone(), *v);
            }
        }
        for a in &self.actions {
            let v: f64 = a.dop.path.iter().map(|r| rs.get(&labels[r])).sum();
            if v != 0.0 {
                out.rewards.insert(a.label.clone(), v);
            }
        }
        out
    }
}

/// Builds the observable attacker: guard `¬e ∧ ⋀dop`, success probability
/// the product over the path, failure leaves the state unchanged.
pub fn observable_attacker(
    graph: &AttackGraph,
    p: &BTreeMap<NodeId, f64>,
    observable: &BTreeSet<NodeId>,
) -> Result<ObservableAttacker, PoError> {
    let probs = rule_probabilities(graph, p)?;
    let names = graph.capability_names();
    let labels = graph.action_labels();
    let vo = observable_vars(graph, observable);
    let mut vars: Vec<String> = vo.iter().map(|n| names[n].clone()).collect();
    vars.sort();
    let init = vo
        .iter()
        .map(|n| (names[n].clone(), graph.kind(*n) == Some(NodeKind::Condition)))
        .collect();
    let mut transitions = Vec::new();
    let mut action_types = BTreeMap::new();
    let mut actions = Vec::new();
    let mut dops = BTreeMap::new();
    for &r in observable {
        let Some(e) = graph.consequence(r) else {
            continue;
        };
        let sets = do_prerequisites(graph, r, observable);
        let ty = graph.action_type(r).expect("rule node");
        for (k, dop) in sets.iter().enumerate() {
            let prob: f64 = dop.path.iter().map(|q| probs[q]).product();
            let label = format!("{}#{k}", labels[&r]);
            let mut lits = vec![(names[&e].clone(), false)];
            lits.extend(dop.prereqs.iter().map(|q| (names[q].clone(), true)));
            action_types.insert(label.clone(), ty.clone());
            let dist: Vec<(Update, f64)> = [(Update::new(), 1.0 - prob), (Update::from([(names[&e].clone(), true)]), prob)]
                .into_iter()
                .filter(|(_, q)| *q > 0.0)
                .collect();
            transitions.push(SymbolicTransition {
                guard: Expr::conj(lits),
                action: label.clone(),
                dist,
            });
            actions.push(AggregatedAction {
                label,
                rule: r,
                dop: dop.clone(),
                prob,
            });
        }
        dops.insert(r, sets);
    }
    let smdp = Smdp {
        vars,
        init,
        actions: transitions.iter().map(|t| t.action.clone()).collect(),
        transitions,
        action_types,
    };
    smdp.validate()?;
    Ok(ObservableAttacker { smdp, actions, dops })
}

/// Who receives an attacker update of the shared variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateScope {
    AttackerOnly,
    Both,
}

/// A one-sided partially observable game together with its ingredients.
#[derive(Clone, Debug)]
pub struct PoGame {
    pub graph: AttackGraph,
    pub probs: BTreeMap<NodeId, f64>,
    pub observable: BTreeSet<NodeId>,
    pub attacker: Smdp,
    pub defender: Smdp,
    pub triggers: BTreeSet<String>,
    pub scheduler: Scheduler,
    pub rewards: Vec<RewardStructure>,
    pub game: StochasticGame,
}

/// Inputs shared by the PO game and its transformation.
#[derive(Clone, Debug)]
pub struct PoConfig<'a> {
    pub graph: &'a AttackGraph,
    pub probs: &'a BTreeMap<NodeId, f64>,
    pub observable: &'a BTreeSet<NodeId>,
    pub defense: &'a DefenseSpec,
    pub scheduler: &'a Scheduler,
    pub rewards: &'a [RewardStructure],
    pub cap: usize,
}

impl PoGame {
    pub fn build(cfg: PoConfig<'_>) -> Result<PoGame, PoError> {
        let attacker = attacker_smdp(cfg.graph, cfg.probs)?;
        let triggers = cfg.defense.referenced_attacker_vars(&attacker)?;
        let defender = defender_smdp(cfg.defense, &attacker, &triggers)?;
        let labels = cfg.graph.action_labels();
        let obs_labels: BTreeSet<&String> = cfg.observable.iter().filter_map(|r| labels.get(r)).collect();
        let att = attacker.compile()?;
        let def = defender.compile()?;
        let observable = att.actions.iter().map(|a| obs_labels.contains(a)).collect();
        let game = compose_general(ComposeSpec {
            attacker: &att,
            defender: &def,
            sched: cfg.scheduler,
            rewards: cfg.rewards,
            observable,
            cap: cfg.cap,
        })?;
        Ok(PoGame {
            graph: cfg.graph.clone(),
            probs: cfg.probs.clone(),
            observable: cfg.observable.clone(),
            attacker,
            defender,
            triggers,
            scheduler: cfg.scheduler.clone(),
            rewards: cfg.rewards.to_vec(),
            game,
        })
    }

    /// The defender's observation of a state: its own valuation and the turn.
    pub fn obs(&self, s: usize) -> (&Bits, Player) {
        let st = &self.game.states[s];
        (&st.d, st.turn)
    }

    /// How an action's updates propagate.
    pub fn up(&self, action: &str) -> UpdateScope {
        let labels = self.graph.action_labels();
        let hidden = labels
            .iter()
            .any(|(r, l)| l == action && !self.observable.contains(r));
        if hidden {
            UpdateScope::AttackerOnly
        } else {
            UpdateScope::Both
        }
    }

    /// Names of the observable capabilities V_O.
    pub fn observable_var_names(&self) -> BTreeSet<String> {
        let names = self.graph.capability_names();
        observable_vars(&self.graph, &self.observable)
            .into_iter()
            .map(|n| names[&n].clone())
            .collect()
    }

    /// Checks that every defense trigger is observable.
    pub fn odt_check(&self) -> Result<(), PoError> {
        let vo = self.observable_var_names();
        let bad: Vec<String> = self.triggers.iter().filter(|t| !vo.contains(*t)).cloned().collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(PoError::NotOdt(bad))
        }
    }

    /// Whether `f` is an observable step-unbounded defense objective for
    /// this game; the error names the violated condition.
    pub fn classify_objective(&self, f: &StateFormula) -> Result<(), String> {
        if f.has_step_operators() {
            return Err("outside the observable step-unbounded fragment: uses X or a step bound".into());
        }
        let defender = Coalition::of(&[Player::Defender]);
        if f.coalitions().iter().any(|c| c.0.iter().any(|p| !defender.contains(*p))) {
            return Err("outside the observable step-unbounded fragment: coalition other than <<def>>".into());
        }
        let mut allowed = self.observable_var_names();
        allowed.extend(self.defender.vars.iter().cloned());
        allowed.insert(ATTACKER_BLOCKED.to_string());
        if let Some(a) = f.atoms().into_iter().find(|a| !allowed.contains(a)) {
            return Err(format!("outside the observable step-unbounded fragment: atom \"{a}\" is not observable"));
        }
        Ok(())
    }
}

/// Size of a game before and after transformation, and DOP counts per rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransformReport {
    pub po_states: usize,
    pub po_transitions: usize,
    pub states: usize,
    pub transitions: usize,
    pub hidden_rules: Vec<String>,
    pub dop_counts: BTreeMap<String, usize>,
    pub aggregated: Vec<AggregatedAction>,
}

impl TransformReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[derive(Clone, Debug)]
pub struct Transformed {
    pub attacker: ObservableAttacker,
    pub scheduler: Scheduler,
    pub rewards: Vec<RewardStructure>,
    pub game: StochasticGame,
    pub report: TransformReport,
}

/// Scheduler of the transformed game. Triggers naming an observable rule's
/// label cover all of its aggregated actions; those naming hidden rules are
/// dropped since hidden moves never hand the turn over.
fn project_scheduler(po: &PoGame, obs: &ObservableAttacker) -> Scheduler {
    match &po.scheduler {
        Scheduler::Alternation => Scheduler::Alternation,
        Scheduler::TriggerSet(t) => {
            let labels = po.graph.action_labels();
            let mut out = BTreeSet::new();
            for trig in t {
                if obs.smdp.action_types.values().any(|ty| ty == trig) {
                    out.insert(trig.clone());
                }
                if let Some((&r, _)) = labels.iter().find(|(_, l)| *l == trig) {
                    out.extend(obs.actions.iter().filter(|a| a.rule == r).map(|a| a.label.clone()));
                }
            }
            Scheduler::TriggerSet(out)
        }
    }
}

/// Transforms an ODT game into a perfect game over the observable attacker.
pub fn transform(po: &PoGame) -> Result<Transformed, PoError> {
    transform_with_cap(po, DEFAULT_GAME_CAP)
}

pub fn transform_with_cap(po: &PoGame, cap: usize) -> Result<Transformed, PoError> {
    po.odt_check()?;
    let obs = observable_attacker(&po.graph, &po.probs, &po.observable)?;
    let scheduler = project_scheduler(po, &obs);
    let rewards: Vec<RewardStructure> = po.rewards.iter().map(|rs| obs.lift_rewards(&po.graph, rs)).collect();
    let att = obs.smdp.compile()?;
    let def = po.defender.compile()?;
    let game = compose_general(ComposeSpec {
        attacker: &att,
        defender: &def,
        sched: &scheduler,
        rewards: &rewards,
        observable: vec![true; att.actions.len()],
        cap,
    })?;
    let labels = po.graph.action_labels();
    let report = TransformReport {
        po_states: po.game.num_states(),
        po_transitions: po.game.num_transitions(),
        states: game.num_states(),
        transitions: game.num_transitions(),
        hidden_rules: po
            .graph
            .rule_nodes()
            .into_iter()
            .filter(|r| !po.observable.contains(r))
            .map(|r| labels[&r].clone())
            .collect(),
        dop_counts: obs.dops.iter().map(|(r, d)| (labels[r].clone(), d.len())).collect(),
        aggregated: obs.actions.clone(),
    };
    Ok(Transformed {
        attacker: obs,
        scheduler,
        rewards,
        game,
        report,
    })
}

#[cfg(test)]
mod tests;
