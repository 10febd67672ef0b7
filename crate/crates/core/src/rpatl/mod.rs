//! rPATL model checking and memoryless strategy synthesis.
//!
//! Reachability probabilities are computed by value iteration from the zero
//! vector after an exact graph-based pass fixes the states with value 0 or 1.
//! Expected rewards first find the states that cannot be forced into the
//! target almost surely (value ∞), then bound the rest from above by fixing
//! the reaching player to an attractor strategy and iterate downward from
//! that bound, so zero-reward cycles cannot masquerade as cheap.

mod ast;
mod engine;

pub use ast::{parse, Cmp, Coalition, FormulaError, Opt, PathFormula, Query, RpatlFormula, StateFormula};

use crate::bits::StateSet;
use crate::game::{Player, StochasticGame};
use engine::{almost_sure, iterate, positive, steps, Flat, Role};
use serde_json::Value;
use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RpatlError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("unknown label \"{0}\"")]
    UnknownAtom(String),
    #[error("unknown reward structure \"{0}\"")]
    UnknownReward(String),
    #[error("reward operator without a name needs exactly one reward structure, found {0}")]
    AmbiguousReward(usize),
    #[error("numeric query `{0}` used inside a formula")]
    NestedQuery(String),
    #[error("cannot synthesize a strategy for `{0}`: {1}")]
    NotSynthesizable(String, &'static str),
    #[error("strategy has no choice for reachable state {0}")]
    StrategyNotTotal(String),
    #[error("invalid strategy: {0}")]
    BadStrategy(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Options {
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            epsilon: 1e-8,
            max_iters: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    /// Per-state value; indicator values for boolean formulas.
    pub values: Vec<f64>,
    /// Satisfying states, absent for numeric queries.
    pub sat: Option<StateSet>,
    pub iterations: usize,
    pub converged: bool,
    pub init: usize,
}

impl CheckResult {
    pub fn init_value(&self) -> f64 {
        self.values[self.init]
    }

    pub fn holds_initially(&self) -> Option<bool> {
        self.sat.as_ref().map(|s| s.contains(self.init))
    }
}

/// A memoryless deterministic strategy for one player.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    pub player: Player,
    /// Chosen action index per state, `None` at the other player's states.
    pub choices: Vec<Option<usize>>,
    pub objective: String,
    pub value: f64,
    pub converged: bool,
}

struct Solution {
    values: Vec<f64>,
    /// For every state, the choice index into the flat game used by its owner.
    choice: Vec<Option<usize>>,
}

struct Ctx<'g> {
    game: &'g StochasticGame,
    flat: Flat,
    opts: Options,
    iterations: usize,
    converged: bool,
}

impl<'g> Ctx<'g> {
    fn new(game: &'g StochasticGame, opts: Options) -> Self {
        Ctx {
            game,
            flat: Flat::new(game),
            opts,
            iterations: 0,
            converged: true,
        }
    }

    fn n(&self) -> usize {
        self.game.num_states()
    }

    fn maxer(&self, coalition: &Coalition, opt: Opt) -> Vec<bool> {
        self.flat
            .player
            .iter()
            .map(|p| coalition.contains(*p) == (opt == Opt::Max))
            .collect()
    }

    fn sat(&mut self, f: &StateFormula) -> Result<StateSet, RpatlError> {
        let n = self.n();
        Ok(match f {
            StateFormula::True => StateSet::full(n),
            StateFormula::Atom(a) => match self.game.label(a) {
                Some(s) => s.clone(),
                None if a == "init" => StateSet::from_fn(n, |s| s == self.game.init),
                None => return Err(RpatlError::UnknownAtom(a.clone())),
            },
            StateFormula::Not(a) => self.sat(a)?.complement(),
            StateFormula::And(a, b) => self.sat(a)?.intersection(&self.sat(b)?),
            StateFormula::Or(a, b) => self.sat(a)?.union(&self.sat(b)?),
            StateFormula::Prob {
                coalition,
                query: Query::Bound(c, b),
                path,
            } => {
                let sol = self.path(coalition, c.opt(), path)?;
                StateSet::from_fn(n, |s| c.holds(sol.values[s], *b))
            }
            StateFormula::Reward {
                coalition,
                reward,
                query: Query::Bound(c, b),
                target,
            } => {
                let sol = self.reward(coalition, c.opt(), reward.as_deref(), target)?;
                StateSet::from_fn(n, |s| c.holds(sol.values[s], *b))
            }
            q => return Err(RpatlError::NestedQuery(q.to_string())),
        })
    }

    fn record(&mut self, iterations: usize, converged: bool) {
        self.iterations += iterations;
        self.converged &= converged;
    }

    fn path(&mut self, coalition: &Coalition, opt: Opt, path: &PathFormula) -> Result<Solution, RpatlError> {
        let n = self.n();
        let maxer = self.maxer(coalition, opt);
        match path {
            PathFormula::Next(phi) => {
                let sat = self.sat(phi)?;
                let v: Vec<f64> = (0..n).map(|s| if sat.contains(s) { 1.0 } else { 0.0 }).collect();
                let roles: Vec<Role> = maxer.iter().map(|&max| Role::Free { max }).collect();
                let out = steps(&self.flat, &roles, v, 1);
                Ok(Solution {
                    values: out.values,
                    choice: out.choice,
                })
            }
            PathFormula::BoundedUntil(a, b, k) => {
                let (s1, s2) = (self.sat(a)?, self.sat(b)?);
                let init: Vec<f64> = (0..n).map(|s| if s2.contains(s) { 1.0 } else { 0.0 }).collect();
                let roles: Vec<Role> = (0..n)
                    .map(|s| {
                        if s2.contains(s) || !s1.contains(s) {
                            Role::Fixed
                        } else {
                            Role::Free { max: maxer[s] }
                        }
                    })
                    .collect();
                let out = steps(&self.flat, &roles, init, *k);
                self.record(out.iterations, true);
                Ok(Solution {
                    values: out.values,
                    choice: out.choice,
                })
            }
            PathFormula::Until(a, b) => {
                let (s1, s2) = (self.sat(a)?, self.sat(b)?);
                Ok(self.until(&s1, &s2, &maxer))
            }
        }
    }

    fn until(&mut self, s1: &StateSet, s2: &StateSet, maxer: &[bool]) -> Solution {
        let n = self.n();
        let f = &self.flat;
        let target: Vec<bool> = (0..n).map(|s| s2.contains(s)).collect();
        let allowed: Vec<bool> = (0..n).map(|s| s1.contains(s) && !s2.contains(s)).collect();
        let pos = positive(f, &target, &allowed, maxer);
        let (one, witness) = almost_sure(f, &target, &allowed, maxer);
        let mut init = vec![0.0; n];
        let mut roles = vec![Role::Fixed; n];
        for s in 0..n {
            if one[s] {
                init[s] = 1.0;
            } else if pos[s] {
                roles[s] = Role::Free { max: maxer[s] };
            }
        }
        let out = iterate(f, &roles, init, None, vec![None; n], self.opts.epsilon, self.opts.max_iters);
        let mut choice = out.choice;
        for s in 0..n {
            choice[s] = if target[s] || !allowed[s] {
                f.first_choice(s)
            } else if one[s] {
                if maxer[s] {
                    witness[s]
                } else {
                    f.first_choice(s)
                }
            } else if !pos[s] {
                if maxer[s] {
                    f.first_choice(s)
                } else {
                    f.choices(s)
                        .filter(|&c| f.dist(c).all(|(t, _)| !pos[t]))
                        .min_by_key(|&c| f.rank[f.action[c]])
                }
            } else {
                choice[s]
            };
        }
        self.record(out.iterations, out.converged);
        Solution {
            values: out.values,
            choice,
        }
    }

    fn reward_vector(&self, name: Option<&str>) -> Result<Vec<f64>, RpatlError> {
        let per_action = match name {
            Some(r) => self
                .game
                .rewards
                .get(r)
                .ok_or_else(|| RpatlError::UnknownReward(r.to_string()))?,
            None if self.game.rewards.len() == 1 => self.game.rewards.values().next().expect("one structure"),
            None => return Err(RpatlError::AmbiguousReward(self.game.rewards.len())),
        };
        Ok(self.flat.choice_rewards(per_action))
    }

    fn reward(
        &mut self,
        coalition: &Coalition,
        opt: Opt,
        name: Option<&str>,
        target: &StateFormula,
    ) -> Result<Solution, RpatlError> {
        let n = self.n();
        let r = self.reward_vector(name)?;
        let goal = self.sat(target)?;
        let maxer = self.maxer(coalition, opt);
        let reacher: Vec<bool> = maxer.iter().map(|m| !m).collect();
        let f = &self.flat;
        let tgt: Vec<bool> = (0..n).map(|s| goal.contains(s)).collect();
        let rest: Vec<bool> = tgt.iter().map(|t| !t).collect();
        let (finite, witness) = almost_sure(f, &tgt, &rest, &reacher);

        let mut init = vec![0.0; n];
        let mut bound_roles = vec![Role::Fixed; n];
        for s in 0..n {
            if !finite[s] {
                init[s] = f64::INFINITY;
            } else if !tgt[s] {
                bound_roles[s] = match (reacher[s], witness[s]) {
                    (true, Some(c)) => Role::Forced(c),
                    _ => Role::Free { max: true },
                };
            }
        }
        let (eps, max_iters) = (self.opts.epsilon, self.opts.max_iters);
        let upper = iterate(f, &bound_roles, init, Some(&r), vec![None; n], eps, max_iters);
        let roles: Vec<Role> = (0..n)
            .map(|s| match bound_roles[s] {
                Role::Fixed => Role::Fixed,
                _ => Role::Free { max: maxer[s] },
            })
            .collect();
        let out = iterate(f, &roles, upper.values, Some(&r), upper.choice, eps, max_iters);
        let mut choice = out.choice;
        for s in 0..n {
            if tgt[s] || (!finite[s] && reacher[s]) {
                choice[s] = f.first_choice(s);
            } else if !finite[s] {
                let best = f
                    .choices(s)
                    .filter(|&c| f.dist(c).any(|(t, _)| !finite[t]))
                    .min_by_key(|&c| f.rank[f.action[c]]);
                choice[s] = best.or_else(|| f.first_choice(s));
            }
        }
        self.record(upper.iterations + out.iterations, upper.converged && out.converged);
        Ok(Solution {
            values: out.values,
            choice,
        })
    }

    fn solve_query(&mut self, f: &StateFormula) -> Result<Option<Solution>, RpatlError> {
        Ok(match f {
            StateFormula::Prob { coalition, query, path } => Some(self.path(coalition, query.opt(), path)?),
            StateFormula::Reward {
                coalition,
                reward,
                query,
                target,
            } => Some(self.reward(coalition, query.opt(), reward.as_deref(), target)?),
            _ => None,
        })
    }

    fn result(&self, values: Vec<f64>, sat: Option<StateSet>) -> CheckResult {
        CheckResult {
            values,
            sat,
            iterations: self.iterations,
            converged: self.converged,
            init: self.game.init,
        }
    }
}

/// Checks a formula. Numeric queries yield values; other formulas yield the
/// satisfying set, with values as its indicator or, for bounded operators,
/// the underlying probabilities or rewards.
pub fn check(game: &StochasticGame, f: &RpatlFormula, opts: Options) -> Result<CheckResult, RpatlError> {
    let mut ctx = Ctx::new(game, opts);
    if f.is_numeric_query() {
        let sol = ctx.solve_query(f)?.expect("numeric query");
        return Ok(ctx.result(sol.values, None));
    }
    let sat = ctx.sat(f)?;
    let values = match ctx.solve_query(f)? {
        Some(sol) => sol.values,
        None => (0..game.num_states()).map(|s| if sat.contains(s) { 1.0 } else { 0.0 }).collect(),
    };
    Ok(ctx.result(values, Some(sat)))
}

pub fn sat(game: &StochasticGame, f: &StateFormula, opts: Options) -> Result<StateSet, RpatlError> {
    Ctx::new(game, opts).sat(f)
}

/// Per-state probabilities of `path`: `opt` at coalition states, the
/// opposite elsewhere.
pub fn prob_path(
    game: &StochasticGame,
    coalition: &Coalition,
    opt: Opt,
    path: &PathFormula,
    opts: Options,
) -> Result<CheckResult, RpatlError> {
    let mut ctx = Ctx::new(game, opts);
    let sol = ctx.path(coalition, opt, path)?;
    Ok(ctx.result(sol.values, None))
}

/// Per-state expected reward accumulated until reaching `target`, ∞ where the
/// minimizing side cannot reach it almost surely.
pub fn expected_reward(
    game: &StochasticGame,
    coalition: &Coalition,
    opt: Opt,
    reward: Option<&str>,
    target: &StateFormula,
    opts: Options,
) -> Result<CheckResult, RpatlError> {
    let mut ctx = Ctx::new(game, opts);
    let sol = ctx.reward(coalition, opt, reward, target)?;
    Ok(ctx.result(sol.values, None))
}

/// Synthesizes a defender strategy for a `<<def>>` query.
pub fn synthesize(game: &StochasticGame, f: &RpatlFormula, opts: Options) -> Result<Strategy, RpatlError> {
    synthesize_for(game, f, Player::Defender, opts)
}

/// Synthesizes a strategy for `player`, which must be the query's whole coalition.
pub fn synthesize_for(
    game: &StochasticGame,
    f: &RpatlFormula,
    player: Player,
    opts: Options,
) -> Result<Strategy, RpatlError> {
    let coalition = match f {
        StateFormula::Prob {
            path: PathFormula::BoundedUntil(..),
            ..
        } => {
            return Err(RpatlError::NotSynthesizable(
                f.to_string(),
                "step-bounded objectives need memory",
            ));
        }
        StateFormula::Prob { coalition, .. } | StateFormula::Reward { coalition, .. } => coalition,
        _ => {
            return Err(RpatlError::NotSynthesizable(
                f.to_string(),
                "not a probability or reward objective",
            ))
        }
    };
    if *coalition != Coalition::of(&[player]) {
        return Err(RpatlError::NotSynthesizable(
            f.to_string(),
            "the coalition must be exactly the synthesizing player",
        ));
    }
    let mut ctx = Ctx::new(game, opts);
    let sol = ctx.solve_query(f)?.expect("query");
    let choices = (0..game.num_states())
        .map(|s| {
            if game.player(s) == player {
                sol.choice[s].map(|c| ctx.flat.action[c])
            } else {
                None
            }
        })
        .collect();
    Ok(Strategy {
        player,
        choices,
        objective: f.to_string(),
        value: sol.values[game.init],
        converged: ctx.converged,
    })
}

fn reachable(game: &StochasticGame, keep: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; game.num_states()];
    let mut queue = VecDeque::from([game.init]);
    seen[game.init] = true;
    while let Some(s) = queue.pop_front() {
        for c in game.choices[s].iter().filter(|c| keep(s, c.action)) {
            for &(t, _) in &c.dist {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    seen
}

/// Restricts the strategy owner's states to their chosen actions.
pub fn apply_strategy(game: &StochasticGame, strategy: &Strategy) -> Result<StochasticGame, RpatlError> {
    if strategy.choices.len() != game.num_states() {
        return Err(RpatlError::BadStrategy(format!(
            "{} entries for {} states",
            strategy.choices.len(),
            game.num_states()
        )));
    }
    let owned = |s: usize| game.player(s) == strategy.player && !game.choices[s].is_empty();
    let keep = |s: usize, a: usize| !owned(s) || strategy.choices[s].is_none_or(|c| c == a);
    let seen = reachable(game, keep);
    let mut out = game.clone();
    for s in 0..game.num_states() {
        if !owned(s) {
            continue;
        }
        match strategy.choices[s] {
            Some(a) => {
                if !game.choices[s].iter().any(|c| c.action == a) {
                    return Err(RpatlError::BadStrategy(format!(
                        "action {} not enabled in {}",
                        game.actions[a].label,
                        game.describe_state(s)
                    )));
                }
                out.choices[s].retain(|c| c.action == a);
            }
            None if seen[s] => return Err(RpatlError::StrategyNotTotal(game.describe_state(s))),
            None => {}
        }
    }
    Ok(out)
}

/// Variable valuation of a state as a JSON map. Defender-side names are
/// plain; attacker copies of shared variables carry a trailing `'`.
pub fn state_valuation(game: &StochasticGame, s: usize) -> BTreeMap<String, Value> {
    let st = &game.states[s];
    let mut m = BTreeMap::new();
    for (i, v) in game.attacker_vars.iter().enumerate() {
        let key = if game.defender_vars.contains(v) {
            format!("{v}'")
        } else {
            v.clone()
        };
        m.insert(key, Value::Bool(st.a.get(i)));
    }
    for (i, v) in game.defender_vars.iter().enumerate() {
        m.insert(v.clone(), Value::Bool(st.d.get(i)));
    }
    m.insert("turn".into(), Value::String(st.turn.to_string()));
    m
}

impl Strategy {
    /// `[{"state": valuation, "action": label}]` over the states with a choice.
    pub fn to_json(&self, game: &StochasticGame) -> String {
        let entries: Vec<Value> = self
            .choices
            .iter()
            .enumerate()
            .filter_map(|(s, c)| {
                c.map(|a| {
                    serde_json::json!({
                        "state": state_valuation(game, s),
                        "action": game.actions[a].label,
                    })
                })
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("serializable")
    }

    pub fn from_json(game: &StochasticGame, player: Player, text: &str) -> Result<Strategy, RpatlError> {
        #[derive(serde::Deserialize)]
        struct Entry {
            state: BTreeMap<String, Value>,
            action: String,
        }
        let entries: Vec<Entry> =
            serde_json::from_str(text).map_err(|e| RpatlError::BadStrategy(e.to_string()))?;
        let index: HashMap<String, usize> = (0..game.num_states())
            .map(|s| (serde_json::to_string(&state_valuation(game, s)).expect("json"), s))
            .collect();
        let mut choices = vec![None; game.num_states()];
        for e in entries {
            let key = serde_json::to_string(&e.state).expect("json");
            let s = *index
                .get(&key)
                .ok_or_else(|| RpatlError::BadStrategy(format!("no state matches {key}")))?;
            let a = game
                .action_index(&e.action)
                .filter(|a| game.choices[s].iter().any(|c| c.action == *a))
                .ok_or_else(|| RpatlError::BadStrategy(format!("action {} not enabled in {key}", e.action)))?;
            choices[s] = Some(a);
        }
        Ok(Strategy {
            player,
            choices,
            objective: String::new(),
            value: f64::NAN,
            converged: true,
        })
    }
}

/// States from which `player` can force reaching `target` with probability 1.
pub fn almost_sure_states(game: &StochasticGame, target: &StateSet, player: Player) -> StateSet {
    let f = Flat::new(game);
    let n = game.num_states();
    let tgt: Vec<bool> = (0..n).map(|s| target.contains(s)).collect();
    let rest: Vec<bool> = tgt.iter().map(|t| !t).collect();
    let ours: Vec<bool> = f.player.iter().map(|p| *p == player).collect();
    let (x, _) = almost_sure(&f, &tgt, &rest, &ours);
    StateSet::from_fn(n, |s| x[s])
}

#[cfg(test)]
mod tests;
