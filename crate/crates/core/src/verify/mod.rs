//! Executable soundness checks for the partially observable transformation.
//!
//! `check_weak_bisim` checks the literal relation between a PO game and its
//! transformation; `dual_check` and `strategy_equiv` compare the numbers the
//! two games produce, which is what the soundness claims are about.

mod montecarlo;
mod random;

pub use montecarlo::{monte_carlo, wilson_interval, AttackerPolicy, McEstimate};
pub use random::{random_odt, OdtInstance, OdtParams};

use crate::game::{Player, StochasticGame, ATTACKER_BLOCKED};
use crate::pogame::{PoGame, Transformed};
use crate::rpatl::{apply_strategy, check, synthesize, Options, RpatlError, RpatlFormula, Strategy};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Rpatl(#[from] RpatlError),
    #[error("strategy lift undefined at {0}")]
    LiftUndefined(String),
}

/// Pairs of related states, index into the first game then the second.
pub type Relation = BTreeSet<(usize, usize)>;

/// For every state, the states reachable by `τ* a` where `a` is visible.
///
/// Invisible moves are reflexive-transitively closed first, so a state with
/// a visible self-loop reaches itself.
pub fn weak_closure(game: &StochasticGame, visible: &dyn Fn(usize) -> bool) -> Vec<BTreeSet<usize>> {
    let n = game.num_states();
    let mut tau: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut vis: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, cs) in game.choices.iter().enumerate() {
        for c in cs {
            let out = if visible(c.action) { &mut vis[s] } else { &mut tau[s] };
            out.extend(c.dist.iter().filter(|(_, p)| *p > 0.0).map(|(t, _)| *t));
        }
    }
    (0..n)
        .map(|s| {
            let mut seen = BTreeSet::from([s]);
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &t in &tau[u] {
                    if seen.insert(t) {
                        stack.push(t);
                    }
                }
            }
            seen.iter().flat_map(|&u| vis[u].iter().copied()).collect()
        })
        .collect()
}

/// Actions of the PO game the defender sees: everything but hidden attacker rules.
pub fn po_visible(po: &PoGame) -> impl Fn(usize) -> bool + '_ {
    let labels = po.graph.action_labels();
    let hidden: BTreeSet<String> = labels
        .into_iter()
        .filter(|(r, _)| !po.observable.contains(r))
        .map(|(_, l)| l)
        .collect();
    move |a| !hidden.contains(&po.game.actions[a].label)
}

/// Valuations on the names both games label, `attackerBlocked` excluded.
fn label_key(game: &StochasticGame, names: &[String], s: usize) -> Vec<bool> {
    names.iter().map(|n| game.labels[n].contains(s)).collect()
}

fn common_labels(g: &StochasticGame, h: &StochasticGame) -> Vec<String> {
    g.labels
        .keys()
        .filter(|k| k.as_str() != ATTACKER_BLOCKED && h.labels.contains_key(*k))
        .cloned()
        .collect()
}

/// Projects a state onto the attacker-local observable capabilities, the
/// defender's state and the turn.
fn projection(game: &StochasticGame, local: &[String], s: usize) -> (Vec<bool>, Vec<bool>, Player) {
    let st = &game.states[s];
    let a = local
        .iter()
        .map(|v| {
            let i = game.attacker_vars.iter().position(|x| x == v).expect("local var");
            st.a.get(i)
        })
        .collect();
    let d = (0..game.defender_vars.len()).map(|j| st.d.get(j)).collect();
    (a, d, st.turn)
}

/// All pairs whose projections on V_O \ V_AD, V_D and the turn coincide.
pub fn candidate_relation(po: &PoGame, t: &Transformed) -> Relation {
    let local: Vec<String> = po
        .observable_var_names()
        .into_iter()
        .filter(|v| !po.triggers.contains(v))
        .collect();
    let mut index: HashMap<_, Vec<usize>> = HashMap::new();
    for s in 0..t.game.num_states() {
        index.entry(projection(&t.game, &local, s)).or_default().push(s);
    }
    let mut rel = Relation::new();
    for s in 0..po.game.num_states() {
        if let Some(ts) = index.get(&projection(&po.game, &local, s)) {
            rel.extend(ts.iter().map(|&t| (s, t)));
        }
    }
    rel
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub pair: (usize, usize),
    pub left: String,
    pub right: String,
    pub reason: String,
}

/// Checks that `rel` is a weak bisimulation relating the initial states.
pub fn check_weak_bisim(
    g: &StochasticGame,
    g_visible: &dyn Fn(usize) -> bool,
    h: &StochasticGame,
    h_visible: &dyn Fn(usize) -> bool,
    rel: &Relation,
) -> Result<(), Counterexample> {
    let cex = |(s, t): (usize, usize), reason: String| Counterexample {
        pair: (s, t),
        left: g.describe_state(s),
        right: h.describe_state(t),
        reason,
    };
    if !rel.contains(&(g.init, h.init)) {
        return Err(cex((g.init, h.init), "initial states are not related".into()));
    }
    let names = common_labels(g, h);
    let wg = weak_closure(g, g_visible);
    let wh = weak_closure(h, h_visible);
    for &(s, t) in rel {
        if label_key(g, &names, s) != label_key(h, &names, t) {
            return Err(cex((s, t), "valuations differ on shared variables".into()));
        }
        for &s2 in &wg[s] {
            if !wh[t].iter().any(|&t2| rel.contains(&(s2, t2))) {
                return Err(cex((s, t), format!("left move to {} has no related answer", g.describe_state(s2))));
            }
        }
        for &t2 in &wh[t] {
            if !wg[s].iter().any(|&s2| rel.contains(&(s2, t2))) {
                return Err(cex((s, t), format!("right move to {} has no related answer", h.describe_state(t2))));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub formula: String,
    pub value_po: Option<f64>,
    pub value_transformed: Option<f64>,
    pub delta: Option<f64>,
    pub verdict: Verdict,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AgreementReport {
    pub entries: Vec<Agreement>,
}

impl AgreementReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Fail)
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.entries.iter().filter(|e| e.verdict == v).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

fn init_value(game: &StochasticGame, f: &RpatlFormula, opts: Options) -> Result<f64, RpatlError> {
    let r = check(game, f, opts)?;
    Ok(match r.holds_initially() {
        Some(b) if !f.is_numeric_query() => f64::from(u8::from(b)),
        _ => r.init_value(),
    })
}

fn compare(formula: String, a: f64, b: f64, tol: f64, note: Option<String>) -> Agreement {
    let delta = if a == b { 0.0 } else { (a - b).abs() };
    Agreement {
        formula,
        value_po: Some(a),
        value_transformed: Some(b),
        delta: Some(delta),
        verdict: if delta <= tol { Verdict::Pass } else { Verdict::Fail },
        note,
    }
}

/// Checks each formula on both games and compares initial values.
pub fn dual_check(po: &PoGame, t: &Transformed, formulas: &[RpatlFormula], opts: Options) -> Result<AgreementReport, VerifyError> {
    let mut report = AgreementReport::default();
    for f in formulas {
        if let Err(reason) = po.classify_objective(f) {
            report.entries.push(Agreement {
                formula: f.to_string(),
                value_po: None,
                value_transformed: None,
                delta: None,
                verdict: Verdict::Skipped,
                note: Some(reason),
            });
            continue;
        }
        let a = init_value(&po.game, f, opts)?;
        let b = init_value(&t.game, f, opts)?;
        report.entries.push(compare(f.to_string(), a, b, DEFAULT_TOLERANCE, None));
    }
    Ok(report)
}

/// Maps a transformed-game defender strategy onto the PO game through the
/// candidate relation. Related defender states share their projection, so
/// the lift reads nothing the defender cannot observe.
pub fn lift_strategy(po: &PoGame, t: &Transformed, rel: &Relation, st: &Strategy) -> Result<Strategy, VerifyError> {
    let g = &po.game;
    let image: BTreeMap<usize, usize> = rel.iter().map(|&(s, s2)| (s, s2)).collect();
    let mut choices = vec![None; g.num_states()];
    for s in 0..g.num_states() {
        if g.player(s) != Player::Defender {
            continue;
        }
        let s2 = *image.get(&s).ok_or_else(|| VerifyError::LiftUndefined(g.describe_state(s)))?;
        let a2 = st.choices[s2].ok_or_else(|| VerifyError::LiftUndefined(t.game.describe_state(s2)))?;
        let label = &t.game.actions[a2].label;
        let a = g
            .action_index(label)
            .filter(|a| g.choices[s].iter().any(|c| c.action == *a))
            .ok_or_else(|| VerifyError::LiftUndefined(format!("{} has no {label}", g.describe_state(s))))?;
        choices[s] = Some(a);
    }
    Ok(Strategy {
        player: Player::Defender,
        choices,
        objective: st.objective.clone(),
        value: f64::NAN,
        converged: st.converged,
    })
}

/// Synthesizes on the transformed game, lifts to the PO game, and compares
/// the lifted strategy's guaranteed value with the synthesized one.
pub fn strategy_equiv(po: &PoGame, t: &Transformed, objective: &RpatlFormula, opts: Options) -> Result<Agreement, VerifyError> {
    if let Err(reason) = po.classify_objective(objective) {
        return Ok(Agreement {
            formula: objective.to_string(),
            value_po: None,
            value_transformed: None,
            delta: None,
            verdict: Verdict::Skipped,
            note: Some(reason),
        });
    }
    let st = synthesize(&t.game, objective, opts)?;
    let rel = candidate_relation(po, t);
    let lifted = lift_strategy(po, t, &rel, &st)?;
    let induced = apply_strategy(&po.game, &lifted)?;
    let v = check(&induced, objective, opts)?.init_value();
    Ok(compare(objective.to_string(), v, st.value, DEFAULT_TOLERANCE, None))
}
