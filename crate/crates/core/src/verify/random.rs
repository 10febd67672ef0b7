//! Seeded generator of random ODT instances.
//!
//! Instances stay inside the class the transformation is claimed sound for:
//! a derived capability is established either only by hidden rules or only
//! by observable ones, the goal's rules are observable, defenses read and
//! revoke observable capabilities only, and no defense revokes a
//! prerequisite of a hidden rule. The scheduler hands the turn over on
//! successful observable moves only.

use crate::game::Scheduler;
use crate::pogame::{PoConfig, PoError, PoGame};
use crate::rpatl::{parse, RpatlFormula};
use crate::smdp::{attacker_rewards, DefenseRule, DefenseSpec, DefenseUpdate, RewardStructure};
use crate::threat_model::{parse_attack_model, AttackGraph, NodeId, NodeKind, Predicate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Size knobs; ranges are inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct OdtParams {
    pub conditions: (usize, usize),
    pub derived: (usize, usize),
    pub max_fanin: usize,
    pub hidden_prob: f64,
    pub defenses: (usize, usize),
}

impl Default for OdtParams {
    fn default() -> Self {
        OdtParams {
            conditions: (3, 5),
            derived: (8, 14),
            max_fanin: 3,
            hidden_prob: 0.4,
            defenses: (1, 4),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OdtInstance {
    pub seed: u64,
    pub model: String,
    pub graph: AttackGraph,
    pub observable: BTreeSet<NodeId>,
    pub defense: DefenseSpec,
    pub scheduler: Scheduler,
    pub rewards: Vec<RewardStructure>,
    /// Goal reachability, blocking and cost objectives for the defender.
    pub formulas: Vec<RpatlFormula>,
}

impl OdtInstance {
    pub fn build(&self) -> Result<PoGame, PoError> {
        PoGame::build(PoConfig {
            graph: &self.graph,
            probs: &BTreeMap::new(),
            observable: &self.observable,
            defense: &self.defense,
            scheduler: &self.scheduler,
            rewards: &self.rewards,
            cap: crate::game::DEFAULT_GAME_CAP,
        })
    }

    pub fn hidden_rules(&self) -> Vec<NodeId> {
        self.graph
            .rule_nodes()
            .into_iter()
            .filter(|r| !self.observable.contains(r))
            .collect()
    }
}

/// A layered Horn model over `has` conditions and `got` capabilities; the
/// last capability is the goal.
fn layered_model(rng: &mut ChaCha8Rng, p: &OdtParams) -> (String, String) {
    let nc = rng.gen_range(p.conditions.0..=p.conditions.1);
    let nd = rng.gen_range(p.derived.0..=p.derived.1);
    let mut text = String::new();
    for c in 0..nc {
        text.push_str(&format!("has('c{c}').\n"));
    }
    let mut rule = 0;
    let mut used = vec![false; nd];
    for d in 0..nd {
        let pool: Vec<String> = (0..nc)
            .map(|c| format!("has('c{c}')"))
            .chain((0..d).map(|j| format!("got('d{j}')")))
            .collect();
        let producers = if d == 0 { 1 } else { rng.gen_range(1..=2) };
        for j in 0..producers {
            let k = rng.gen_range(1..=p.max_fanin.min(pool.len()));
            let mut body: Vec<usize> = Vec::new();
            // The first producer builds on an earlier capability, so the
            // graph has depth and branches.
            if d > 0 && j == 0 {
                body.push(nc + if rng.gen_bool(0.5) { d - 1 } else { rng.gen_range(0..d) });
            }
            for b in rand::seq::index::sample(rng, pool.len(), k) {
                if body.len() < k && !body.contains(&b) {
                    body.push(b);
                }
            }
            // The goal closes over every capability nothing else uses, so
            // slicing to the goal keeps them all.
            if d + 1 == nd && j == 0 {
                let rest: Vec<usize> = (0..d).map(|i| nc + i).filter(|b| !used[b - nc] && !body.contains(b)).collect();
                body.extend(rest);
            }
            for &b in &body {
                if b >= nc {
                    used[b - nc] = true;
                }
            }
            let score = (rng.gen_range(0.3..0.95_f64) * 100.0).round() / 100.0;
            let cost = rng.gen_range(1..=5);
            let body: Vec<&str> = body.iter().map(|&b| pool[b].as_str()).collect();
            text.push_str(&format!(
                "got('d{d}') :- {}. [id=r{rule}, score={score}, cost={cost}]\n",
                body.join(", ")
            ));
            rule += 1;
        }
    }
    (text, format!("d{}", nd - 1))
}

/// Draws the instance for `seed`; equal seeds give equal instances.
pub fn random_odt(seed: u64, params: &OdtParams) -> OdtInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, goal_name) = layered_model(&mut rng, params);
    let goal = Predicate::ground("got", &[&goal_name]);
    let graph = parse_attack_model(&model)
        .expect("generated model parses")
        .ground(&goal)
        .expect("generated model grounds");

    let names = graph.capability_names();
    let labels = graph.action_labels();
    let mut observable: BTreeSet<NodeId> = graph.rule_nodes().into_iter().collect();
    for d in graph.nodes_of(NodeKind::Derived) {
        if d != graph.goal && rng.gen_bool(params.hidden_prob) {
            for r in graph.pred(d) {
                observable.remove(&r);
            }
        }
    }
    let hidden_prereqs: BTreeSet<NodeId> = graph
        .rule_nodes()
        .into_iter()
        .filter(|r| !observable.contains(r))
        .flat_map(|r| graph.pred(r))
        .collect();
    let mut candidates: Vec<NodeId> = graph
        .nodes_of(NodeKind::Condition)
        .into_iter()
        .chain(observable.iter().filter_map(|&r| graph.consequence(r)))
        .filter(|n| !hidden_prereqs.contains(n))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    candidates.shuffle(&mut rng);
    let conditions: Vec<NodeId> = graph
        .nodes_of(NodeKind::Condition)
        .into_iter()
        .filter(|n| !hidden_prereqs.contains(n))
        .collect();

    let nd = rng.gen_range(params.defenses.0..=params.defenses.1).min(candidates.len());
    let mut rules = Vec::new();
    for (i, &x) in candidates.iter().take(nd).enumerate() {
        let x = &names[&x];
        let mut guard = x.clone();
        if let Some(&y) = candidates.get(nd + i).filter(|_| rng.gen_bool(0.3)) {
            guard = format!("{guard} & {}", names[&y]);
        }
        let mut assign = BTreeMap::from([(x.clone(), false)]);
        // Sometimes also close a condition for good, as a patch does.
        if let Some(&c) = conditions.choose(&mut rng).filter(|_| rng.gen_bool(0.5)) {
            assign.insert(names[&c].clone(), false);
        }
        let q = (rng.gen_range(0.5..0.95_f64) * 100.0).round() / 100.0;
        rules.push(DefenseRule {
            name: format!("revoke_{x}"),
            guard,
            updates: vec![
                DefenseUpdate {
                    assign,
                    prob: q,
                },
                DefenseUpdate {
                    assign: BTreeMap::new(),
                    prob: ((1.0 - q) * 100.0).round() / 100.0,
                },
            ],
            cost: f64::from(rng.gen_range(5..=50)),
        });
    }
    rules.push(DefenseRule {
        name: "skip".into(),
        guard: "true".into(),
        updates: vec![DefenseUpdate {
            assign: BTreeMap::new(),
            prob: 1.0,
        }],
        cost: 1.0,
    });
    let defense = DefenseSpec {
        rules,
        init: BTreeMap::new(),
    };

    let mut triggers: BTreeSet<String> = observable
        .iter()
        .filter(|_| rng.gen_bool(0.7))
        .map(|r| labels[r].clone())
        .collect();
    triggers.insert(labels[&graph.pred(graph.goal)[0]].clone());
    let scheduler = Scheduler::TriggerSet(triggers);

    let rewards = vec![defense.costs("dCosts"), attacker_rewards(&graph, "aCosts", false)];
    let g = &names[&graph.goal];
    let formulas = [
        "<<def>> Pmax=? [F \"attackerBlocked\"]".to_string(),
        format!("<<def>> Pmin=? [F \"{g}\"]"),
        format!("<<def>> Pmax=? [F (\"attackerBlocked\" & !\"{g}\")]"),
        "<<def>> R{\"dCosts\"}min=? [F \"attackerBlocked\"]".to_string(),
    ]
    .iter()
    .map(|f| parse(f).expect("objective parses"))
    .collect();
    OdtInstance {
        seed,
        model,
        graph,
        observable,
        defense,
        scheduler,
        rewards,
        formulas,
    }
}
