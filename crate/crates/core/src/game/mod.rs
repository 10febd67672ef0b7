//! Turn-based two-player stochastic games composed from attacker and defender MDPs.
//!
//! A game state pairs the attacker's valuation over V_A with the defender's
//! valuation over V_D and the player to move. Variables in V_AD = V_A ∩ V_D
//! have one copy on each side. In a perfect game every attacker update of a
//! shared variable is written to both copies; the partially observable game
//! in [`crate::pogame`] lifts only observable ones.

mod prism;

pub use prism::export_prism;

use crate::bits::{Bits, StateSet};
use crate::smdp::{CompiledSmdp, Mdp, RewardStructure};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

pub const IDLE_A: &str = "idle_A";
pub const IDLE_D: &str = "idle_D";
pub const ATTACKER_BLOCKED: &str = "attackerBlocked";
pub const DEFAULT_GAME_CAP: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("action {0} belongs to both players")]
    ActionCollision(String),
    #[error("state cap of {0} exceeded")]
    StateCap(usize),
    #[error("trigger {0} names no attacker action or action type")]
    UnknownTrigger(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Player {
    #[serde(rename = "A")]
    Attacker,
    #[serde(rename = "D")]
    Defender,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::Attacker => "A",
            Player::Defender => "D",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GameState {
    pub a: Bits,
    pub d: Bits,
    pub turn: Player,
}

/// Decides who moves next after a move.
///
/// Defender moves always return control to the attacker, and attacker moves
/// the defender cannot observe never hand control over. Otherwise
/// `Alternation` gives the defender every turn after an attacker move, while
/// `TriggerSet` does so only when the move's type or label is in the set and
/// the move changed the attacker's state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "triggers", rename_all = "kebab-case")]
pub enum Scheduler {
    Alternation,
    TriggerSet(BTreeSet<String>),
}

impl Scheduler {
    pub fn next(&self, mover: Player, action: &ActionInfo, observable: bool, changed: bool) -> Player {
        match mover {
            Player::Defender => Player::Attacker,
            Player::Attacker if !observable => Player::Attacker,
            Player::Attacker => match self {
                Scheduler::Alternation => Player::Defender,
                Scheduler::TriggerSet(t) => {
                    if changed && (t.contains(&action.ty) || t.contains(&action.label)) {
                        Player::Defender
                    } else {
                        Player::Attacker
                    }
                }
            },
        }
    }

    /// Checks that every trigger names an attacker action or action type.
    pub fn check_triggers(&self, attacker: &CompiledSmdp) -> Result<(), GameError> {
        if let Scheduler::TriggerSet(t) = self {
            for trig in t {
                if !attacker.actions.contains(trig) && !attacker.action_types.contains(trig) {
                    return Err(GameError::UnknownTrigger(trig.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionInfo {
    pub label: String,
    pub owner: Player,
    pub ty: String,
    pub idle: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub dist: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticGame {
    pub attacker_vars: Vec<String>,
    pub defender_vars: Vec<String>,
    pub states: Vec<GameState>,
    pub init: usize,
    pub actions: Vec<ActionInfo>,
    pub choices: Vec<Vec<Choice>>,
    pub labels: BTreeMap<String, StateSet>,
    /// Reward per action index, one vector per structure.
    pub rewards: BTreeMap<String, Vec<f64>>,
}

impl StochasticGame {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.choices.iter().map(Vec::len).sum()
    }

    pub fn player(&self, s: usize) -> Player {
        self.states[s].turn
    }

    pub fn label(&self, name: &str) -> Option<&StateSet> {
        self.labels.get(name)
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.label == label)
    }

    pub fn state_index(&self) -> HashMap<&GameState, usize> {
        self.states.iter().enumerate().map(|(i, s)| (s, i)).collect()
    }

    /// Names of the variables true in a state, attacker-exclusive ones read
    /// from the attacker copy and the rest from the defender copy.
    pub fn true_vars(&self, s: usize) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter(|(name, set)| name.as_str() != ATTACKER_BLOCKED && set.contains(s))
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn describe_state(&self, s: usize) -> String {
        let st = &self.states[s];
        let side = |vars: &[String], b: &Bits| {
            vars.iter()
                .enumerate()
                .filter(|(i, _)| b.get(*i))
                .map(|(_, v)| v.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "t={} A{{{}}} D{{{}}}",
            st.turn,
            side(&self.attacker_vars, &st.a),
            side(&self.defender_vars, &st.d)
        )
    }
}

/// At most one distribution per (state, action).
pub fn check_deterministic(game: &StochasticGame) -> bool {
    game.choices.iter().all(|cs| {
        let mut seen = BTreeSet::new();
        cs.iter().all(|c| seen.insert(c.action))
    })
}

/// Composition settings shared by perfect and partially observable games.
pub(crate) struct ComposeSpec<'a> {
    pub attacker: &'a CompiledSmdp,
    pub defender: &'a CompiledSmdp,
    pub sched: &'a Scheduler,
    pub rewards: &'a [RewardStructure],
    /// Whether each attacker action writes the defender's copy of V_AD.
    pub observable: Vec<bool>,
    pub cap: usize,
}

/// Composes two MDPs into a perfect-information game.
pub fn compose(
    attacker: &Mdp,
    defender: &Mdp,
    sched: &Scheduler,
    rewards: &[RewardStructure],
) -> Result<StochasticGame, GameError> {
    compose_with_cap(attacker, defender, sched, rewards, DEFAULT_GAME_CAP)
}

pub fn compose_with_cap(
    attacker: &Mdp,
    defender: &Mdp,
    sched: &Scheduler,
    rewards: &[RewardStructure],
    cap: usize,
) -> Result<StochasticGame, GameError> {
    compose_general(ComposeSpec {
        attacker: &attacker.symbolic,
        defender: &defender.symbolic,
        sched,
        rewards,
        observable: vec![true; attacker.symbolic.actions.len()],
        cap,
    })
}

fn merge(dist: &mut Vec<(usize, f64)>, id: usize, p: f64) {
    match dist.iter_mut().find(|(d, _)| *d == id) {
        Some(e) => e.1 += p,
        None => dist.push((id, p)),
    }
}

pub(crate) fn compose_general(spec: ComposeSpec) -> Result<StochasticGame, GameError> {
    let (att, def) = (spec.attacker, spec.defender);
    for a in &att.actions {
        if def.actions.contains(a) {
            return Err(GameError::ActionCollision(a.clone()));
        }
    }
    spec.sched.check_triggers(att)?;

    let a_to_d: Vec<Option<usize>> = att.vars.iter().map(|v| def.var(v)).collect();
    let d_to_a: Vec<Option<usize>> = def.vars.iter().map(|v| att.var(v)).collect();

    let mut actions: Vec<ActionInfo> = Vec::new();
    for (i, a) in att.actions.iter().enumerate() {
        actions.push(ActionInfo {
            label: a.clone(),
            owner: Player::Attacker,
            ty: att.action_types[i].clone(),
            idle: false,
        });
    }
    let d_offset = actions.len();
    for (i, a) in def.actions.iter().enumerate() {
        actions.push(ActionInfo {
            label: a.clone(),
            owner: Player::Defender,
            ty: def.action_types[i].clone(),
            idle: false,
        });
    }
    let idle_a = actions.len();
    let idle_d = idle_a + 1;
    for (label, owner) in [(IDLE_A, Player::Attacker), (IDLE_D, Player::Defender)] {
        actions.push(ActionInfo {
            label: label.into(),
            owner,
            ty: label.into(),
            idle: true,
        });
    }

    let init = GameState {
        a: att.init.clone(),
        d: def.init.clone(),
        turn: Player::Attacker,
    };
    let mut states = vec![init.clone()];
    let mut index: HashMap<GameState, usize> = HashMap::from([(init, 0)]);
    let mut choices: Vec<Vec<Choice>> = Vec::new();
    let mut blocked = Vec::new();
    let mut queue = VecDeque::from([0usize]);

    let mut intern = |st: GameState,
                      states: &mut Vec<GameState>,
                      queue: &mut VecDeque<usize>|
     -> Result<usize, GameError> {
        if let Some(&id) = index.get(&st) {
            return Ok(id);
        }
        if states.len() >= spec.cap {
            return Err(GameError::StateCap(spec.cap));
        }
        let id = states.len();
        index.insert(st.clone(), id);
        states.push(st);
        queue.push_back(id);
        Ok(id)
    };

    while let Some(s) = queue.pop_front() {
        let cur = states[s].clone();
        let mut cs: Vec<Choice> = Vec::new();
        let mover = cur.turn;
        match mover {
            Player::Attacker => {
                for t in att.enabled(&cur.a) {
                    let info = &actions[t.action];
                    let obs = spec.observable[t.action];
                    let mut dist = Vec::new();
                    for (u, p) in &t.updates {
                        let a2 = CompiledSmdp::apply(&cur.a, u);
                        let mut d2 = cur.d.clone();
                        if obs {
                            for &(i, b) in u {
                                if let Some(j) = a_to_d[i] {
                                    d2.set(j, b);
                                }
                            }
                        }
                        let turn = spec.sched.next(mover, info, obs, a2 != cur.a);
                        let id = intern(
                            GameState { a: a2, d: d2, turn },
                            &mut states,
                            &mut queue,
                        )?;
                        merge(&mut dist, id, *p);
                    }
                    cs.push(Choice {
                        action: t.action,
                        dist,
                    });
                }
            }
            Player::Defender => {
                for t in def.enabled(&cur.d) {
                    let mut dist = Vec::new();
                    for (u, p) in &t.updates {
                        let d2 = CompiledSmdp::apply(&cur.d, u);
                        let mut a2 = cur.a.clone();
                        for &(j, b) in u {
                            if let Some(i) = d_to_a[j] {
                                a2.set(i, b);
                            }
                        }
                        let turn = Player::Attacker;
                        let id = intern(
                            GameState { a: a2, d: d2, turn },
                            &mut states,
                            &mut queue,
                        )?;
                        merge(&mut dist, id, *p);
                    }
                    cs.push(Choice {
                        action: d_offset + t.action,
                        dist,
                    });
                }
            }
        }
        blocked.push(mover == Player::Attacker && cs.is_empty());
        if cs.is_empty() {
            let idle = if mover == Player::Attacker { idle_a } else { idle_d };
            let turn = spec.sched.next(mover, &actions[idle], true, false);
            let id = intern(
                GameState {
                    a: cur.a.clone(),
                    d: cur.d.clone(),
                    turn,
                },
                &mut states,
                &mut queue,
            )?;
            cs.push(Choice {
                action: idle,
                dist: vec![(id, 1.0)],
            });
        }
        choices.push(cs);
    }

    let n = states.len();
    let mut labels = BTreeMap::new();
    for (i, v) in att.vars.iter().enumerate() {
        if a_to_d[i].is_none() {
            labels.insert(v.clone(), StateSet::from_fn(n, |s| states[s].a.get(i)));
        }
    }
    for (j, v) in def.vars.iter().enumerate() {
        labels.insert(v.clone(), StateSet::from_fn(n, |s| states[s].d.get(j)));
    }
    labels.insert(ATTACKER_BLOCKED.to_string(), StateSet::from_fn(n, |s| blocked[s]));

    let rewards = spec
        .rewards
        .iter()
        .map(|rs| {
            let v = actions
                .iter()
                .map(|a| if a.idle { 0.0 } else { rs.get(&a.label) })
                .collect();
            (rs.name.clone(), v)
        })
        .collect();

    Ok(StochasticGame {
        attacker_vars: att.vars.clone(),
        defender_vars: def.vars.clone(),
        states,
        init: 0,
        actions,
        choices,
        labels,
        rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::{expand, Expr, Smdp, SymbolicTransition, Update, Valuation};
    use std::collections::BTreeMap;

    fn one_rule_attacker() -> Smdp {
        Smdp {
            vars: vec!["e".into(), "f".into()],
            init: Valuation::from([("e".into(), false), ("f".into(), true)]),
            actions: BTreeSet::from(["r".to_string()]),
            transitions: vec![SymbolicTransition {
                guard: Expr::conj([("e", false), ("f", true)]),
                action: "r".into(),
                dist: vec![(Update::new(), 0.26), (Update::from([("e".into(), true)]), 0.74)],
            }],
            action_types: BTreeMap::from([("r".to_string(), "remote_DOS".to_string())]),
        }
    }

    fn one_rule_defender() -> Smdp {
        Smdp {
            vars: vec!["e".into()],
            init: Valuation::from([("e".into(), false)]),
            actions: BTreeSet::from(["clear".to_string()]),
            transitions: vec![SymbolicTransition {
                guard: Expr::var("e"),
                action: "clear".into(),
                dist: vec![(Update::from([("e".into(), false)]), 1.0)],
            }],
            action_types: BTreeMap::new(),
        }
    }

    fn observer() -> Smdp {
        Smdp {
            vars: vec![],
            init: Valuation::new(),
            actions: BTreeSet::new(),
            transitions: vec![],
            action_types: BTreeMap::new(),
        }
    }

    #[test]
    fn idle_defender_is_inserted() {
        let a = expand(&one_rule_attacker()).unwrap();
        let d = expand(&observer()).unwrap();
        let g = compose(&a, &d, &Scheduler::Alternation, &[]).unwrap();
        for s in 0..g.num_states() {
            if g.player(s) == Player::Defender {
                assert_eq!(g.choices[s].len(), 1);
                assert_eq!(g.actions[g.choices[s][0].action].label, IDLE_D);
            }
        }
        assert!(check_deterministic(&g));
    }

    #[test]
    fn alternation_product_counts() {
        // states: (e=0,A) (e=0,D) (e=1,D) (e=1,A blocked)
        // (e=0,A): r -> 0.26 (e=0,D), 0.74 (e=1,D)
        // (e=0,D): idle_D -> (e=0,A)
        // (e=1,D): clear -> (e=0,A)
        let a = expand(&one_rule_attacker()).unwrap();
        let d = expand(&one_rule_defender()).unwrap();
        let g = compose(&a, &d, &Scheduler::Alternation, &[]).unwrap();
        assert_eq!(g.num_states(), 3);
        assert_eq!(g.num_transitions(), 3);
        let init = &g.choices[g.init][0];
        assert_eq!(init.dist.len(), 2);
        assert!(g.label(ATTACKER_BLOCKED).unwrap().is_empty());
    }

    #[test]
    fn trigger_set_passes_control_only_on_success() {
        let a = expand(&one_rule_attacker()).unwrap();
        let d = expand(&one_rule_defender()).unwrap();
        let sched = Scheduler::TriggerSet(BTreeSet::from(["remote_DOS".to_string()]));
        let g = compose(&a, &d, &sched, &[]).unwrap();
        let init = &g.choices[g.init][0];
        let fail = init.dist.iter().find(|(_, p)| (*p - 0.26).abs() < 1e-12).unwrap();
        assert_eq!(fail.0, g.init);
        let succ = init.dist.iter().find(|(_, p)| (*p - 0.74).abs() < 1e-12).unwrap();
        assert_eq!(g.player(succ.0), Player::Defender);

        let none = Scheduler::TriggerSet(BTreeSet::new());
        let g = compose(&a, &d, &none, &[]).unwrap();
        assert!(g.states.iter().all(|s| s.turn == Player::Attacker));
        assert_eq!(g.label(ATTACKER_BLOCKED).unwrap().count(), 1);
    }

    #[test]
    fn unknown_trigger_and_collision() {
        let a = expand(&one_rule_attacker()).unwrap();
        let d = expand(&one_rule_defender()).unwrap();
        let sched = Scheduler::TriggerSet(BTreeSet::from(["nope".to_string()]));
        assert_eq!(
            compose(&a, &d, &sched, &[]),
            Err(GameError::UnknownTrigger("nope".into()))
        );
        let mut dd = one_rule_defender();
        dd.actions = BTreeSet::from(["r".to_string()]);
        dd.transitions[0].action = "r".into();
        let d = expand(&dd).unwrap();
        assert_eq!(
            compose(&a, &d, &Scheduler::Alternation, &[]),
            Err(GameError::ActionCollision("r".into()))
        );
    }

    #[test]
    fn duplicate_choice_is_nondeterministic() {
        let a = expand(&one_rule_attacker()).unwrap();
        let d = expand(&observer()).unwrap();
        let mut g = compose(&a, &d, &Scheduler::Alternation, &[]).unwrap();
        let c = g.choices[0][0].clone();
        g.choices[0].push(c);
        assert!(!check_deterministic(&g));
    }

    #[test]
    fn rewards_skip_idle_actions() {
        let a = expand(&one_rule_attacker()).unwrap();
        let d = expand(&observer()).unwrap();
        let mut rs = RewardStructure::new("aCosts");
        rs.rewards.insert("r".into(), 3.0);
        let g = compose(&a, &d, &Scheduler::Alternation, &[rs]).unwrap();
        let r = &g.rewards["aCosts"];
        assert_eq!(r[g.action_index("r").unwrap()], 3.0);
        assert_eq!(r[g.action_index(IDLE_D).unwrap()], 0.0);
    }
}
