//! Seeded simulation of a game under fixed strategies.

use crate::bits::StateSet;
use crate::game::{Player, StochasticGame};
use crate::rpatl::Strategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug)]
pub enum AttackerPolicy {
    /// A fixed attacker strategy, typically synthesized against the defender's.
    Strategy(Strategy),
    /// Uniform over enabled choices.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub runs: u64,
    pub hits: u64,
    pub estimate: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// 95% Wilson score interval for `hits` successes out of `runs`.
pub fn wilson_interval(hits: u64, runs: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054_f64;
    let n = runs as f64;
    let p = hits as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn absorbing(game: &StochasticGame, s: usize) -> bool {
    game.choices[s]
        .iter()
        .all(|c| c.dist.iter().all(|&(t, _)| t == s))
}

fn episode(
    game: &StochasticGame,
    defender: &Strategy,
    attacker: &AttackerPolicy,
    target: &StateSet,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    let mut s = game.init;
    for _ in 0..horizon {
        if target.contains(s) {
            return true;
        }
        if absorbing(game, s) {
            return false;
        }
        let cs = &game.choices[s];
        let fixed = match game.player(s) {
            Player::Defender => defender.choices[s],
            Player::Attacker => match attacker {
                AttackerPolicy::Strategy(st) => st.choices[s],
                AttackerPolicy::Uniform => None,
            },
        };
        let choice = match fixed.and_then(|a| cs.iter().find(|c| c.action == a)) {
            Some(c) => c,
            None => &cs[rng.gen_range(0..cs.len())],
        };
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = choice.dist.last().expect("non-empty distribution").0;
        for &(t, p) in &choice.dist {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        s = next;
    }
    target.contains(s)
}

/// Fraction of episodes reaching `target` within `horizon` steps.
///
/// Episode `i` draws from its own ChaCha stream `i` under `seed`, so the
/// estimate is independent of scheduling and worker count. States without a
/// strategy entry choose uniformly.
pub fn monte_carlo(
    game: &StochasticGame,
    defender: &Strategy,
    attacker: &AttackerPolicy,
    target: &StateSet,
    runs: u64,
    horizon: usize,
    seed: u64,
) -> McEstimate {
    let runs = runs.max(1);
    let hits: u64 = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            u64::from(episode(game, defender, attacker, target, horizon, &mut rng))
        })
        .sum();
    let p = hits as f64 / runs as f64;
    let (ci_low, ci_high) = wilson_interval(hits, runs);
    McEstimate {
        runs,
        hits,
        estimate: p,
        std_err: (p * (1.0 - p) / runs as f64).sqrt(),
        ci_low,
        ci_high,
    }
}
