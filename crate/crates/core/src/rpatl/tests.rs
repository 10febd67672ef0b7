use super::*;
use crate::bits::{Bits, StateSet};
use crate::game::{ActionInfo, Choice, GameState};

type Spec<'a> = Vec<(Player, Vec<(&'a str, Vec<(usize, f64)>)>)>;

/// Builds a game from per-state `(player, [(action, dist)])` lists.
fn build(spec: Spec<'_>, labels: &[(&str, &[usize])], rewards: &[(&str, &[(&str, f64)])]) -> StochasticGame {
    let mut actions: Vec<ActionInfo> = Vec::new();
    let mut choices = Vec::new();
    let mut states = Vec::new();
    for (s, (p, cs)) in spec.iter().enumerate() {
        let mut bits = Bits::with_len(8);
        for i in 0..8 {
            bits.set(i, s >> i & 1 == 1);
        }
        states.push(GameState {
            a: bits,
            d: Bits::with_len(0),
            turn: *p,
        });
        let mut row = Vec::new();
        for (label, dist) in cs {
            let a = match actions.iter().position(|a| a.label == *label) {
                Some(a) => a,
                None => {
                    actions.push(ActionInfo {
                        label: label.to_string(),
                        owner: *p,
                        ty: label.to_string(),
                        idle: label.starts_with("idle"),
                    });
                    actions.len() - 1
                }
            };
            row.push(Choice {
                action: a,
                dist: dist.clone(),
            });
        }
        choices.push(row);
    }
    let n = states.len();
    let labels = labels
        .iter()
        .map(|(l, ss)| (l.to_string(), StateSet::from_fn(n, |s| ss.contains(&s))))
        .collect();
    let rewards = rewards
        .iter()
        .map(|(name, rs)| {
            let v = actions
                .iter()
                .map(|a| rs.iter().find(|(l, _)| *l == a.label).map_or(0.0, |(_, r)| *r))
                .collect();
            (name.to_string(), v)
        })
        .collect();
    StochasticGame {
        attacker_vars: (0..8).map(|i| format!("b{i}")).collect(),
        defender_vars: vec![],
        states,
        init: 0,
        actions,
        choices,
        labels,
        rewards,
    }
}

fn value(g: &StochasticGame, f: &str) -> f64 {
    check(g, &parse(f).unwrap(), Options::default()).unwrap().init_value()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-7
}

/// D idles, then A attacks once: goal w.p. 0.74, else stuck.
fn one_shot() -> StochasticGame {
    use Player::*;
    build(
        vec![
            (Defender, vec![("idle_D", vec![(1, 1.0)])]),
            (Attacker, vec![("attack", vec![(2, 0.74), (3, 0.26)])]),
            (Attacker, vec![("idle_A", vec![(2, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(3, 1.0)])]),
        ],
        &[("goal", &[2])],
        &[],
    )
}

#[test]
fn boolean_layer() {
    let g = one_shot();
    let o = Options::default();
    assert_eq!(sat(&g, &StateFormula::True, o).unwrap().count(), 4);
    assert_eq!(sat(&g, &parse("\"goal\"").unwrap(), o).unwrap().iter().collect::<Vec<_>>(), vec![2]);
    assert_eq!(sat(&g, &parse("!\"goal\" & !\"init\"").unwrap(), o).unwrap().iter().collect::<Vec<_>>(), vec![1, 3]);
    assert!(matches!(
        sat(&g, &parse("\"nope\"").unwrap(), o),
        Err(RpatlError::UnknownAtom(a)) if a == "nope"
    ));
    assert!(matches!(
        check(&g, &parse("!<<def>> Pmax=? [F \"goal\"]").unwrap(), o),
        Err(RpatlError::NestedQuery(_))
    ));
}

#[test]
fn bounded_probability_operator() {
    let g = one_shot();
    let r = check(&g, &parse("<<def>> P>=0.5 [ F \"goal\" ]").unwrap(), Options::default()).unwrap();
    assert_eq!(r.holds_initially(), Some(true));
    assert!(close(r.init_value(), 0.74));
    let r = check(&g, &parse("<<def>> P>=0.8 [ F \"goal\" ]").unwrap(), Options::default()).unwrap();
    assert_eq!(r.holds_initially(), Some(false));
}

#[test]
fn retry_versus_self_disabling() {
    use Player::*;
    let retry = build(
        vec![
            (Attacker, vec![("attack", vec![(1, 0.74), (0, 0.26)])]),
            (Attacker, vec![("idle_A", vec![(1, 1.0)])]),
        ],
        &[("goal", &[1])],
        &[],
    );
    assert!(close(value(&retry, "<<att>> Pmax=? [F \"goal\"]"), 1.0));
    assert!(close(value(&one_shot(), "<<att>> Pmax=? [F \"goal\"]"), 0.74));
    assert_eq!(value(&retry, "<<att>> Pmax=? [\"goal\" U \"goal\"]"), 0.0);
}

#[test]
fn targets_and_dead_states() {
    let g = one_shot();
    let path = PathFormula::Until(Box::new(parse("!\"goal\"").unwrap()), Box::new(parse("\"goal\"").unwrap()));
    let r = prob_path(&g, &Coalition::of(&[Player::Defender]), Opt::Min, &path, Options::default()).unwrap();
    assert_eq!(r.values[2], 1.0);
    assert_eq!(r.values[3], 0.0);
    assert!(close(r.values[0], 0.74));
}

#[test]
fn expected_rewards() {
    use Player::*;
    let sure = build(
        vec![
            (Attacker, vec![("a", vec![(1, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(1, 1.0)])]),
        ],
        &[("phi", &[1])],
        &[("r", &[("a", 5.0)])],
    );
    assert!(close(value(&sure, "<<att>> Rmin=? [F \"phi\"]"), 5.0));
    let geometric = build(
        vec![
            (Attacker, vec![("a", vec![(1, 0.5), (0, 0.5)])]),
            (Attacker, vec![("idle_A", vec![(1, 1.0)])]),
        ],
        &[("phi", &[1])],
        &[("r", &[("a", 5.0)])],
    );
    assert!(close(value(&geometric, "<<att>> R{\"r\"}min=? [F \"phi\"]"), 10.0));
    let r = check(&geometric, &parse("<<att>> Rmax=? [F \"phi\"]").unwrap(), Options::default()).unwrap();
    assert_eq!(r.values[1], 0.0);
    assert!(close(r.values[0], 10.0));
    assert_eq!(value(&sure, "<<att>> Rmin=? [F !\"init\" & !\"phi\"]"), f64::INFINITY);
    assert!(matches!(
        check(&sure, &parse("<<att>> R{\"x\"}min=? [F \"phi\"]").unwrap(), Options::default()),
        Err(RpatlError::UnknownReward(_))
    ));
}

#[test]
fn zero_reward_loops_are_not_free() {
    use Player::*;
    let g = build(
        vec![
            (Defender, vec![("wait", vec![(0, 1.0)]), ("fix", vec![(1, 1.0)])]),
            (Defender, vec![("idle_D", vec![(1, 1.0)])]),
        ],
        &[("done", &[1])],
        &[("c", &[("fix", 3.0)])],
    );
    let f = parse("<<def>> Rmin=? [F \"done\"]").unwrap();
    assert!(close(check(&g, &f, Options::default()).unwrap().init_value(), 3.0));
    let st = synthesize(&g, &f, Options::default()).unwrap();
    assert_eq!(g.actions[st.choices[0].unwrap()].label, "fix");
}

#[test]
fn synthesis_prefers_blocking() {
    use Player::*;
    let g = build(
        vec![
            (Defender, vec![("idle_D", vec![(1, 1.0)]), ("block", vec![(2, 1.0)])]),
            (Attacker, vec![("attack", vec![(3, 0.8), (2, 0.2)])]),
            (Attacker, vec![("idle_A", vec![(2, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(3, 1.0)])]),
        ],
        &[("attackerBlocked", &[2])],
        &[],
    );
    let f = parse("<<def>> Pmax=? [F \"attackerBlocked\"]").unwrap();
    let st = synthesize(&g, &f, Options::default()).unwrap();
    assert_eq!(g.actions[st.choices[0].unwrap()].label, "block");
    assert!(close(st.value, 1.0));
    assert_eq!(st.choices[1], None);
    let induced = apply_strategy(&g, &st).unwrap();
    assert!(close(value(&induced, "<<>> Pmax=? [F \"attackerBlocked\"]"), st.value));
}

#[test]
fn cheaper_defense_wins_cost_objective() {
    use Player::*;
    let g = build(
        vec![
            (Defender, vec![("shutdown", vec![(1, 1.0)]), ("patch", vec![(1, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(1, 1.0)])]),
        ],
        &[("attackerBlocked", &[1])],
        &[("dCosts", &[("patch", 10.0), ("shutdown", 500.0)])],
    );
    let f = parse("<<def>> R{\"dCosts\"}min=? [F \"attackerBlocked\"]").unwrap();
    let st = synthesize(&g, &f, Options::default()).unwrap();
    assert_eq!(g.actions[st.choices[0].unwrap()].label, "patch");
    assert!(close(st.value, 10.0));
}

#[test]
fn single_action_strategy_is_identity() {
    let g = one_shot();
    let f = parse("<<def>> Pmin=? [F \"goal\"]").unwrap();
    let st = synthesize(&g, &f, Options::default()).unwrap();
    assert_eq!(apply_strategy(&g, &st).unwrap(), g);
    let json = st.to_json(&g);
    let back = Strategy::from_json(&g, Player::Defender, &json).unwrap();
    assert_eq!(back.choices, st.choices);
}

#[test]
fn partial_strategy_is_rejected() {
    let g = one_shot();
    let st = Strategy {
        player: Player::Defender,
        choices: vec![None; 4],
        objective: String::new(),
        value: 0.0,
        converged: true,
    };
    assert!(matches!(apply_strategy(&g, &st), Err(RpatlError::StrategyNotTotal(_))));
}

#[test]
fn next_and_bounded_until() {
    use Player::*;
    let g = build(
        vec![
            (Attacker, vec![("a", vec![(1, 0.5), (0, 0.5)]), ("b", vec![(2, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(1, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(2, 1.0)])]),
        ],
        &[("g", &[1])],
        &[],
    );
    assert_eq!(value(&g, "<<att>> Pmax=? [X \"g\"]"), 0.5);
    assert_eq!(value(&g, "<<att>> Pmin=? [X \"g\"]"), 0.0);
    assert_eq!(value(&g, "<<att>> Pmax=? [true U<=0 \"g\"]"), 0.0);
    assert_eq!(value(&g, "<<att>> Pmax=? [true U<=3 \"g\"]"), 0.875);
    assert!(matches!(
        synthesize_for(&g, &parse("<<att>> Pmax=? [true U<=3 \"g\"]").unwrap(), Player::Attacker, Options::default()),
        Err(RpatlError::NotSynthesizable(..))
    ));
}

#[test]
fn determinacy_duality() {
    use Player::*;
    let g = build(
        vec![
            (Defender, vec![("d1", vec![(1, 1.0)]), ("d2", vec![(2, 1.0)])]),
            (Attacker, vec![("a1", vec![(3, 0.3), (0, 0.7)]), ("a2", vec![(4, 1.0)])]),
            (Attacker, vec![("a3", vec![(3, 0.6), (4, 0.4)])]),
            (Attacker, vec![("idle_A", vec![(3, 1.0)])]),
            (Attacker, vec![("idle_A", vec![(4, 1.0)])]),
        ],
        &[("b", &[3])],
        &[],
    );
    let d = value(&g, "<<def>> Pmax=? [F \"b\"]");
    let a = value(&g, "<<att>> Pmin=? [F \"b\"]");
    assert!(close(d, 0.6));
    assert!(close(d, a));
}
