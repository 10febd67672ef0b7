//! Numeric and qualitative solvers over a flattened game.
//!
//! Sweeps are Jacobi style: iteration n+1 reads only iteration n's vector.
//! Unbounded iterations back a choice up with its self-loop eliminated,
//! `(r + Σ_{t≠s} p·v(t)) / (1 - p(s))`: a memoryless player repeats a choice
//! that returns to the same state, so the fixpoint is unchanged while retry
//! loops with small success probabilities converge in a few sweeps.
//! States are updated in parallel when the game is large enough, and results
//! do not depend on the worker count.

use crate::game::{Player, StochasticGame};
use rayon::prelude::*;
use std::ops::Range;

const PAR_MIN_STATES: usize = 8192;

/// Compressed choice/successor arrays for fast backups.
pub(crate) struct Flat {
    first: Vec<usize>,
    pub action: Vec<usize>,
    off: Vec<usize>,
    succ: Vec<usize>,
    prob: Vec<f64>,
    /// Self-loop probability of each choice.
    stay: Vec<f64>,
    pub player: Vec<Player>,
    /// Lexicographic rank of each action label.
    pub rank: Vec<usize>,
}

impl Flat {
    pub fn new(g: &StochasticGame) -> Self {
        let mut first = vec![0];
        let (mut action, mut off, mut succ, mut prob) = (Vec::new(), vec![0], Vec::new(), Vec::new());
        let mut stay = Vec::new();
        for (s, cs) in g.choices.iter().enumerate() {
            for c in cs {
                action.push(c.action);
                stay.push(c.dist.iter().filter(|(t, _)| *t == s).map(|(_, p)| p).sum());
                for &(t, p) in &c.dist {
                    succ.push(t);
                    prob.push(p);
                }
                off.push(succ.len());
            }
            first.push(action.len());
        }
        let mut order: Vec<usize> = (0..g.actions.len()).collect();
        order.sort_by(|&a, &b| g.actions[a].label.cmp(&g.actions[b].label));
        let mut rank = vec![0; g.actions.len()];
        for (r, a) in order.into_iter().enumerate() {
            rank[a] = r;
        }
        Flat {
            first,
            action,
            off,
            succ,
            prob,
            stay,
            player: g.states.iter().map(|s| s.turn).collect(),
            rank,
        }
    }

    pub fn n(&self) -> usize {
        self.player.len()
    }

    pub fn choices(&self, s: usize) -> Range<usize> {
        self.first[s]..self.first[s + 1]
    }

    #[inline]
    pub fn dist(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.off[c]..self.off[c + 1]).map(move |i| (self.succ[i], self.prob[i]))
    }

    /// One-step backup of choice `c`.
    #[inline]
    pub fn backup(&self, c: usize, v: &[f64], reward: Option<&[f64]>) -> f64 {
        let mut acc = reward.map_or(0.0, |r| r[c]);
        for (t, p) in self.dist(c) {
            acc += p * v[t];
        }
        acc
    }

    /// Backup of choice `c` at `s` repeated until it leaves `s`. A pure
    /// self-loop keeps the one-step backup.
    #[inline]
    pub fn backup_loop_free(&self, s: usize, c: usize, v: &[f64], reward: Option<&[f64]>) -> f64 {
        let stay = self.stay[c];
        if stay == 0.0 || stay >= 1.0 - 1e-15 {
            return self.backup(c, v, reward);
        }
        let mut acc = reward.map_or(0.0, |r| r[c]);
        for (t, p) in self.dist(c) {
            if t != s {
                acc += p * v[t];
            }
        }
        acc / (1.0 - stay)
    }

    #[inline]
    fn eval(&self, s: usize, c: usize, v: &[f64], reward: Option<&[f64]>, loop_free: bool) -> f64 {
        if loop_free {
            self.backup_loop_free(s, c, v, reward)
        } else {
            self.backup(c, v, reward)
        }
    }

    /// Choice rewards from a per-action reward vector.
    pub fn choice_rewards(&self, per_action: &[f64]) -> Vec<f64> {
        self.action.iter().map(|&a| per_action[a]).collect()
    }

    /// The first listed choice of a state, used where any choice is optimal.
    pub fn first_choice(&self, s: usize) -> Option<usize> {
        let r = self.choices(s);
        (!r.is_empty()).then_some(r.start)
    }
}

fn tie(a: f64) -> f64 {
    if a.is_finite() {
        1e-12 * a.abs().max(1.0)
    } else {
        0.0
    }
}

/// True if `a` beats `b` by more than the tie tolerance in direction `max`.
#[inline]
fn strictly_better(a: f64, b: f64, max: bool) -> bool {
    if a == b {
        return false;
    }
    if max {
        a > b + tie(b)
    } else {
        a < b - tie(b)
    }
}

/// One Bellman update with choice tracking.
///
/// The best choice is the optimal backup, lexicographically smallest label on
/// ties. A previously tracked choice is kept unless the best one is strictly
/// better, which keeps strategies extracted from the iteration proper.
#[inline]
fn select(
    f: &Flat,
    s: usize,
    v: &[f64],
    max: bool,
    reward: Option<&[f64]>,
    cur: Option<usize>,
    loop_free: bool,
) -> (f64, Option<usize>) {
    let mut best: Option<(f64, usize)> = None;
    for c in f.choices(s) {
        let val = f.eval(s, c, v, reward, loop_free);
        best = match best {
            None => Some((val, c)),
            Some((bv, _)) if strictly_better(val, bv, max) => Some((val, c)),
            Some((bv, bc)) if strictly_better(bv, val, max) => Some((bv, bc)),
            Some((bv, bc)) => {
                let c = if f.rank[f.action[c]] < f.rank[f.action[bc]] { c } else { bc };
                Some((pick(val, bv, max), c))
            }
        };
    }
    match (best, cur) {
        (None, _) => (v[s], None),
        (Some((bv, bc)), Some(cc)) => {
            let cv = f.eval(s, cc, v, reward, loop_free);
            if strictly_better(bv, cv, max) {
                (bv, Some(bc))
            } else {
                (bv, Some(cc))
            }
        }
        (Some((bv, bc)), None) => (bv, Some(bc)),
    }
}

#[inline]
fn pick(a: f64, b: f64, max: bool) -> f64 {
    if max {
        a.max(b)
    } else {
        a.min(b)
    }
}

/// Per-state role in an iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Role {
    /// Value kept at its initial entry.
    Fixed,
    /// Optimizes over all choices.
    Free { max: bool },
    /// Follows one prescribed choice.
    Forced(usize),
}

pub(crate) struct Outcome {
    pub values: Vec<f64>,
    pub choice: Vec<Option<usize>>,
    pub iterations: usize,
    pub converged: bool,
}

fn sweep(
    f: &Flat,
    roles: &[Role],
    v: &[f64],
    reward: Option<&[f64]>,
    choice: &[Option<usize>],
    loop_free: bool,
) -> Vec<(f64, Option<usize>)> {
    let step = |s: usize| match roles[s] {
        Role::Fixed => (v[s], choice[s]),
        Role::Forced(c) => (f.eval(s, c, v, reward, loop_free), Some(c)),
        Role::Free { max } => select(f, s, v, max, reward, choice[s], loop_free),
    };
    if f.n() >= PAR_MIN_STATES {
        (0..f.n()).into_par_iter().map(step).collect()
    } else {
        (0..f.n()).map(step).collect()
    }
}

fn diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Iterates until the sup-norm change drops below `epsilon`.
pub(crate) fn iterate(
    f: &Flat,
    roles: &[Role],
    init: Vec<f64>,
    reward: Option<&[f64]>,
    choice: Vec<Option<usize>>,
    epsilon: f64,
    max_iters: usize,
) -> Outcome {
    let mut v = init;
    let mut choice = choice;
    for it in 1..=max_iters {
        let next = sweep(f, roles, &v, reward, &choice, true);
        let mut delta: f64 = 0.0;
        for (s, (nv, nc)) in next.into_iter().enumerate() {
            delta = delta.max(diff(nv, v[s]));
            v[s] = nv;
            choice[s] = nc;
        }
        if delta < epsilon {
            return Outcome {
                values: v,
                choice,
                iterations: it,
                converged: true,
            };
        }
    }
    Outcome {
        values: v,
        choice,
        iterations: max_iters,
        converged: max_iters == 0,
    }
}

/// Exactly `k` sweeps.
pub(crate) fn steps(f: &Flat, roles: &[Role], init: Vec<f64>, k: u64) -> Outcome {
    let mut v = init;
    let mut choice = vec![None; f.n()];
    for _ in 0..k {
        let next = sweep(f, roles, &v, None, &vec![None; f.n()], false);
        for (s, (nv, nc)) in next.into_iter().enumerate() {
            v[s] = nv;
            choice[s] = nc;
        }
    }
    Outcome {
        values: v,
        choice,
        iterations: k as usize,
        converged: true,
    }
}

/// Least set containing `target` and every `allowed` state in `region` from
/// which the next step lands in the set with positive probability while
/// staying in `region`: for some choice at `ours` states, for all choices
/// elsewhere. Also returns, for `ours` states, a choice witnessing membership.
pub(crate) fn attract(
    f: &Flat,
    target: &[bool],
    allowed: &[bool],
    region: &[bool],
    ours: &[bool],
) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = f.n();
    let mut x = target.to_vec();
    let mut strat = vec![None; n];
    loop {
        let mut changed = false;
        for s in (0..n).rev() {
            if x[s] || !allowed[s] || !region[s] {
                continue;
            }
            let ok = |c: usize| f.dist(c).all(|(t, _)| region[t]) && f.dist(c).any(|(t, _)| x[t]);
            let cs = f.choices(s);
            if cs.is_empty() {
                continue;
            }
            if ours[s] {
                let best = cs.filter(|&c| ok(c)).min_by_key(|&c| f.rank[f.action[c]]);
                if let Some(c) = best {
                    x[s] = true;
                    strat[s] = Some(c);
                    changed = true;
                }
            } else if cs.clone().all(ok) {
                x[s] = true;
                changed = true;
            }
        }
        if !changed {
            return (x, strat);
        }
    }
}

/// States where `ours` can force reaching `target` through `allowed` states
/// with probability 1, with an attractor strategy for `ours`.
pub(crate) fn almost_sure(
    f: &Flat,
    target: &[bool],
    allowed: &[bool],
    ours: &[bool],
) -> (Vec<bool>, Vec<Option<usize>>) {
    let mut y: Vec<bool> = target.iter().zip(allowed).map(|(t, a)| *t || *a).collect();
    loop {
        let (x, strat) = attract(f, target, allowed, &y, ours);
        if x == y {
            return (x, strat);
        }
        y = x;
    }
}

/// States where `ours` can force reaching `target` through `allowed` states
/// with positive probability.
pub(crate) fn positive(f: &Flat, target: &[bool], allowed: &[bool], ours: &[bool]) -> Vec<bool> {
    attract(f, target, allowed, &vec![true; f.n()], ours).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{Bits, StateSet};
    use crate::game::{ActionInfo, Choice, GameState};
    use std::collections::BTreeMap;

    /// s0 (A) chooses `go` (to s1 w.p. 0.5, else s0) or `stay` (s0).
    fn retry() -> StochasticGame {
        let st = |turn| GameState {
            a: Bits::with_len(0),
            d: Bits::with_len(0),
            turn,
        };
        let info = |l: &str| ActionInfo {
            label: l.into(),
            owner: Player::Attacker,
            ty: l.into(),
            idle: false,
        };
        StochasticGame {
            attacker_vars: vec![],
            defender_vars: vec![],
            states: vec![st(Player::Attacker), st(Player::Attacker)],
            init: 0,
            actions: vec![info("stay"), info("go"), info("idle_A")],
            choices: vec![
                vec![
                    Choice {
                        action: 0,
                        dist: vec![(0, 1.0)],
                    },
                    Choice {
                        action: 1,
                        dist: vec![(1, 0.5), (0, 0.5)],
                    },
                ],
                vec![Choice {
                    action: 2,
                    dist: vec![(1, 1.0)],
                }],
            ],
            labels: BTreeMap::from([("g".into(), StateSet::from_fn(2, |s| s == 1))]),
            rewards: BTreeMap::new(),
        }
    }

    #[test]
    fn tracked_choice_is_progressing() {
        let g = retry();
        let f = Flat::new(&g);
        let roles = [Role::Free { max: true }, Role::Fixed];
        let out = iterate(&f, &roles, vec![0.0, 1.0], None, vec![None; 2], 1e-10, 10_000);
        assert!(out.converged);
        assert!((out.values[0] - 1.0).abs() < 1e-9);
        assert_eq!(out.choice[0].map(|c| f.action[c]), Some(1));
    }

    #[test]
    fn qualitative_sets() {
        let g = retry();
        let f = Flat::new(&g);
        let target = [false, true];
        let allowed = [true, false];
        let (one, strat) = almost_sure(&f, &target, &allowed, &[true, true]);
        assert_eq!(one, vec![true, true]);
        assert_eq!(strat[0].map(|c| f.action[c]), Some(1));
        let (one_min, _) = almost_sure(&f, &target, &allowed, &[false, false]);
        assert_eq!(one_min, vec![false, true]);
        assert_eq!(positive(&f, &target, &allowed, &[false, false]), vec![false, true]);
        assert_eq!(positive(&f, &target, &allowed, &[true, true]), vec![true, true]);
    }

    #[test]
    fn select_breaks_ties_by_label() {
        let g = retry();
        let f = Flat::new(&g);
        let (v, c) = select(&f, 0, &[1.0, 1.0], true, None, None, true);
        assert_eq!(v, 1.0);
        assert_eq!(g.actions[f.action[c.unwrap()]].label, "go");
    }
}
