//! Pipeline stages: graph, game, transformation, checking, synthesis,
//! simulation and verification. Every stage returns JSON-ready values with a
//! canonical ordering, so equal inputs give byte-identical files.

use crate::config::PipelineConfig;
use anyhow::{anyhow, bail, Context, Result};
use posecgame::game::{Player, StochasticGame, DEFAULT_GAME_CAP};
use posecgame::pogame::{observable_vars, transform_with_cap, ObservationSpec, PoConfig, PoGame, Transformed};
use posecgame::rpatl::{
    apply_strategy, check, parse, synthesize, synthesize_for, Coalition, Options, PathFormula, Query, RpatlFormula,
    StateFormula, Strategy,
};
use posecgame::smdp::{attacker_rewards, DefenseSpec, RewardStructure};
use posecgame::threat_model::{agp, import_mulval, parse_attack_model, parse_fact, AttackGraph, AttackModel, NodeId, NodeKind};
use posecgame::verify::{
    candidate_relation, check_weak_bisim, dual_check, monte_carlo, po_visible, strategy_equiv, AttackerPolicy,
    Verdict,
};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Tags an error with the stage it came from.
pub fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| anyhow!("stage {name}: {e:#}"))
}

/// JSON number, with infinities spelled out since JSON has none.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

pub fn load_model(path: &Path) -> Result<AttackModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_attack_model(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
}

pub fn model_summary(m: &AttackModel) -> Value {
    json!({
        "facts": m.facts.len(),
        "rules": m.rules.len(),
        "primitive_predicates": m.primitives,
        "derived_predicates": m.derived,
    })
}

pub fn ground_model(model: &AttackModel, goal: &str) -> Result<AttackGraph> {
    let goal = parse_fact(goal).map_err(|e| anyhow!("goal: {e}"))?;
    Ok(model.ground(&goal)?)
}

pub fn load_graph(cfg: &PipelineConfig) -> Result<AttackGraph> {
    if let Some(m) = &cfg.mulval {
        let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
        return Ok(import_mulval(&read(&m.vertices)?, &read(&m.arcs)?)?);
    }
    let path = cfg.model.as_ref().ok_or_else(|| anyhow!("no attack model"))?;
    ground_model(&load_model(path)?, cfg.goal.as_deref().unwrap_or_default())
}

pub fn graph_summary(g: &AttackGraph) -> Value {
    let count = |k| g.nodes_of(k).len();
    json!({
        "nodes": g.nodes.len(),
        "conditions": count(NodeKind::Condition),
        "derived": count(NodeKind::Derived),
        "rules": count(NodeKind::Rule),
        "edges": g.edges.len(),
        "goal": g.nodes[&g.goal].label,
    })
}

/// Cumulative probability of every node, keyed by node id.
pub fn score_graph(g: &AttackGraph, overrides: &BTreeMap<NodeId, f64>) -> Result<Value> {
    let scores = agp(g, overrides, &BTreeMap::new())?;
    let nodes: Vec<Value> = scores
        .iter()
        .map(|(id, p)| json!({"id": id, "label": g.nodes[id].label, "agp": p}))
        .collect();
    Ok(json!({"goal": g.goal, "goal_agp": scores[&g.goal], "nodes": nodes}))
}

pub fn load_defense(cfg: &PipelineConfig) -> Result<DefenseSpec> {
    match &cfg.defense {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            DefenseSpec::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
        None => Ok(DefenseSpec::default()),
    }
}

pub fn rewards(cfg: &PipelineConfig, g: &AttackGraph, defense: &DefenseSpec) -> Vec<RewardStructure> {
    cfg.rewards
        .iter()
        .map(|r| {
            attacker_rewards(g, "attack", false)
                .scaled(r.attack)
                .plus(&attacker_rewards(g, "damage", true).scaled(r.damage), "sum")
                .plus(&defense.costs("defense").scaled(r.defense), r.name.clone())
        })
        .collect()
}

pub fn observable(cfg: &PipelineConfig, g: &AttackGraph) -> Result<BTreeSet<NodeId>> {
    match &cfg.observation {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let spec = ObservationSpec::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?;
            Ok(spec.resolve(g)?)
        }
        None => Ok(g.rule_nodes().into_iter().collect()),
    }
}

/// The game the analysis runs on: the transformed game when some attack
/// steps are hidden, the perfect game otherwise.
pub struct Analysis {
    pub po: PoGame,
    pub transformed: Option<Transformed>,
}

impl Analysis {
    pub fn game(&self) -> &StochasticGame {
        self.transformed.as_ref().map_or(&self.po.game, |t| &t.game)
    }

    pub fn kind(&self) -> &'static str {
        if self.transformed.is_some() {
            "transformed"
        } else {
            "perfect"
        }
    }
}

pub struct Inputs {
    pub graph: AttackGraph,
    pub defense: DefenseSpec,
    pub observable: BTreeSet<NodeId>,
    pub rewards: Vec<RewardStructure>,
}

impl Inputs {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let graph = stage("graph", load_graph(cfg))?;
        let defense = stage("defense", load_defense(cfg))?;
        let observable = stage("observation", observable(cfg, &graph))?;
        let rewards = rewards(cfg, &graph, &defense);
        Ok(Inputs {
            graph,
            defense,
            observable,
            rewards,
        })
    }
}

pub fn build_po(cfg: &PipelineConfig, inp: &Inputs, observable: &BTreeSet<NodeId>) -> Result<PoGame> {
    Ok(PoGame::build(PoConfig {
        graph: &inp.graph,
        probs: &cfg.scores,
        observable,
        defense: &inp.defense,
        scheduler: &cfg.scheduler,
        rewards: &inp.rewards,
        cap: cfg.state_cap.unwrap_or(DEFAULT_GAME_CAP),
    })?)
}

pub fn analyse(cfg: &PipelineConfig, inp: &Inputs, observable: &BTreeSet<NodeId>) -> Result<Analysis> {
    let po = stage("game", build_po(cfg, inp, observable))?;
    let all_observable = inp.graph.rule_nodes().iter().all(|r| observable.contains(r));
    let transformed = if all_observable {
        None
    } else {
        let cap = cfg.state_cap.unwrap_or(DEFAULT_GAME_CAP);
        Some(stage("transform", transform_with_cap(&po, cap).map_err(Into::into))?)
    };
    Ok(Analysis { po, transformed })
}

pub fn game_summary(game: &StochasticGame) -> Value {
    let defender = (0..game.num_states()).filter(|&s| game.player(s) == Player::Defender).count();
    let labels: BTreeMap<&String, usize> = game.labels.iter().map(|(k, v)| (k, v.count())).collect();
    json!({
        "states": game.num_states(),
        "transitions": game.num_transitions(),
        "attacker_states": game.num_states() - defender,
        "defender_states": defender,
        "actions": game.actions.len(),
        "rewards": game.rewards.keys().collect::<Vec<_>>(),
        "labels": labels,
    })
}

pub fn parse_formulas(texts: &[String]) -> Result<Vec<RpatlFormula>> {
    texts
        .iter()
        .map(|t| parse(t).map_err(|e| anyhow!("formula `{t}`: {e}")))
        .collect()
}

pub struct Checked {
    pub json: Value,
    /// Whether every boolean formula holds initially.
    pub holds: bool,
    pub values: Vec<f64>,
}

pub fn check_all(game: &StochasticGame, formulas: &[RpatlFormula], opts: Options) -> Result<Checked> {
    let mut entries = Vec::new();
    let mut holds = true;
    let mut values = Vec::new();
    for f in formulas {
        let r = check(game, f, opts).map_err(|e| anyhow!("{f}: {e}"))?;
        let h = r.holds_initially();
        holds &= h.unwrap_or(true);
        values.push(r.init_value());
        entries.push(json!({
            "formula": f.to_string(),
            "value": num(r.init_value()),
            "holds": h,
            "iterations": r.iterations,
            "converged": r.converged,
        }));
    }
    Ok(Checked {
        json: json!({"results": entries}),
        holds,
        values,
    })
}

pub fn synthesize_all(game: &StochasticGame, formulas: &[RpatlFormula], opts: Options) -> Result<Vec<Strategy>> {
    formulas
        .iter()
        .map(|f| synthesize(game, f, opts).map_err(|e| anyhow!("{f}: {e}")))
        .collect()
}

/// The target of a defender reachability query `<<def>> P.. [F φ]` or `[true U φ]`.
fn reach_target(f: &RpatlFormula) -> Result<&StateFormula> {
    match f {
        StateFormula::Prob {
            coalition,
            path: PathFormula::Until(l, r),
            ..
        } if **l == StateFormula::True && *coalition == Coalition::of(&[Player::Defender]) => Ok(r),
        _ => bail!("simulation needs a `<<def>> P [F target]` query, got {f}"),
    }
}

pub fn simulate(
    game: &StochasticGame,
    formula: &RpatlFormula,
    runs: u64,
    horizon: usize,
    uniform: bool,
    seed: u64,
    opts: Options,
) -> Result<Value> {
    let target_f = reach_target(formula)?;
    let target = posecgame::rpatl::sat(game, target_f, opts)?;
    let def = synthesize(game, formula, opts)?;
    let (policy, checked) = if uniform {
        (AttackerPolicy::Uniform, None)
    } else {
        // The attacker answers with the opposite objective.
        let flip = match formula {
            StateFormula::Prob { query, path, .. } => StateFormula::Prob {
                coalition: Coalition::of(&[Player::Attacker]),
                query: Query::Value(query.opt().flip()),
                path: path.clone(),
            },
            _ => unreachable!("checked above"),
        };
        let att = synthesize_for(game, &flip, Player::Attacker, opts)?;
        let chain = apply_strategy(&apply_strategy(game, &def)?, &att)?;
        let v = check(&chain, formula, opts)?.init_value();
        (AttackerPolicy::Strategy(att), Some(v))
    };
    let est = monte_carlo(game, &def, &policy, &target, runs, horizon, seed);
    Ok(json!({
        "formula": formula.to_string(),
        "seed": seed,
        "horizon": horizon,
        "attacker": if uniform { "uniform" } else { "optimal" },
        "synthesized_value": num(def.value),
        "checked_value": checked.map(num),
        "estimate": est,
    }))
}

pub struct Soundness {
    pub json: Value,
    pub passed: bool,
}

/// Dual check, weak bisimulation and strategy lifting on one PO game.
pub fn soundness(po: &PoGame, formulas: &[RpatlFormula], opts: Options) -> Result<Soundness> {
    let t = transform_with_cap(po, DEFAULT_GAME_CAP)?;
    let report = dual_check(po, &t, formulas, opts)?;
    let rel = candidate_relation(po, &t);
    let vis = po_visible(po);
    let all = |_: usize| true;
    let bisim = check_weak_bisim(&po.game, &vis, &t.game, &all, &rel);
    let mut lifted = Vec::new();
    for f in formulas {
        lifted.push(strategy_equiv(po, &t, f, opts)?);
    }
    let passed = report.passed() && bisim.is_ok() && lifted.iter().all(|a| a.verdict != Verdict::Fail);
    let json = json!({
        "po_states": po.game.num_states(),
        "transformed_states": t.game.num_states(),
        "agreement": report,
        "weak_bisimulation": match &bisim {
            Ok(()) => json!({"holds": true, "pairs": rel.len()}),
            Err(c) => json!({"holds": false, "counterexample": c}),
        },
        "strategies": lifted,
        "passed": passed,
    });
    Ok(Soundness { json, passed })
}

/// Rules that can be hidden one after another, in id order, while every
/// defense trigger and the goal stay observable.
pub fn hideable_rules(inp: &Inputs, triggers: &BTreeSet<String>) -> Vec<NodeId> {
    let g = &inp.graph;
    let names = g.capability_names();
    let mut obs = inp.observable.clone();
    let mut out = Vec::new();
    for r in g.rule_nodes() {
        if !obs.contains(&r) || g.consequence(r) == Some(g.goal) {
            continue;
        }
        obs.remove(&r);
        let visible: BTreeSet<&String> = observable_vars(g, &obs).iter().map(|v| &names[v]).collect();
        if triggers.iter().all(|t| visible.contains(t)) {
            out.push(r);
        } else {
            obs.insert(r);
        }
    }
    out
}
