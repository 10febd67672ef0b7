//! Property tests over generated instances.

use posecgame::game::Player;
use posecgame::pogame::transform;
use posecgame::rpatl::{
    apply_strategy, check, expected_reward, parse, prob_path, synthesize, Coalition, Opt, Options, PathFormula, StateFormula,
    Strategy as Schedule,
};
use posecgame::smdp::{parse_expr, DefenseSpec, Expr};
use posecgame::verify::{random_odt, OdtParams};
use proptest::prelude::*;

const TOL: f64 = 1e-6;

fn opts() -> Options {
    Options::default()
}

fn def() -> Coalition {
    Coalition::of(&[Player::Defender])
}

fn goal_atom(seed: u64) -> String {
    let inst = random_odt(seed, &OdtParams::default());
    let names = inst.graph.capability_names();
    names[&inst.graph.goal].clone()
}

fn expr() -> impl proptest::strategy::Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::True),
        Just(Expr::False),
        prop::sample::select(vec!["p", "q", "r"]).prop_map(|v| Expr::Var(v.to_string())),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::And),
            prop::collection::vec(inner, 2..4).prop_map(Expr::Or),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generator_is_a_function_of_the_seed(seed in 0u64..100_000) {
        let a = random_odt(seed, &OdtParams::default());
        let b = random_odt(seed, &OdtParams::default());
        prop_assert_eq!(a.model, b.model);
        prop_assert_eq!(a.observable, b.observable);
        prop_assert_eq!(a.defense, b.defense);
    }

    #[test]
    fn values_are_probabilities_and_min_below_max(seed in 0u64..10_000) {
        let inst = random_odt(seed, &OdtParams::default());
        let po = inst.build().unwrap();
        let g = format!("\"{}\"", goal_atom(seed));
        let lo = check(&po.game, &parse(&format!("<<def>> Pmin=? [F {g}]")).unwrap(), opts()).unwrap();
        let hi = check(&po.game, &parse(&format!("<<def>> Pmax=? [F {g}]")).unwrap(), opts()).unwrap();
        for (a, b) in lo.values.iter().zip(&hi.values) {
            prop_assert!((-TOL..=1.0 + TOL).contains(a));
            prop_assert!(*a <= b + TOL);
        }
        // Both players together can do at least as well as the defender alone.
        let both = Coalition::of(&[Player::Defender, Player::Attacker]);
        let target = parse(&g).unwrap();
        let path = PathFormula::Until(Box::new(StateFormula::True), Box::new(target));
        let joint = prob_path(&po.game, &both, Opt::Max, &path, opts()).unwrap();
        for (a, b) in hi.values.iter().zip(&joint.values) {
            prop_assert!(*a <= b + TOL);
        }
    }

    #[test]
    fn bounded_until_grows_towards_the_unbounded_value(seed in 0u64..10_000) {
        let inst = random_odt(seed, &OdtParams::default());
        let po = inst.build().unwrap();
        let g = parse(&format!("\"{}\"", goal_atom(seed))).unwrap();
        let until = PathFormula::Until(Box::new(StateFormula::True), Box::new(g.clone()));
        let full = prob_path(&po.game, &def(), Opt::Max, &until, opts()).unwrap();
        let mut prev = vec![0.0; po.game.num_states()];
        for k in [0, 1, 2, 4, 8, 16] {
            let b = PathFormula::BoundedUntil(Box::new(StateFormula::True), Box::new(g.clone()), k);
            let r = prob_path(&po.game, &def(), Opt::Max, &b, opts()).unwrap();
            for s in 0..prev.len() {
                prop_assert!(prev[s] <= r.values[s] + TOL);
                prop_assert!(r.values[s] <= full.values[s] + TOL);
            }
            prev = r.values;
        }
    }

    #[test]
    fn rewards_scale_linearly(seed in 0u64..10_000, c in 0.5f64..8.0) {
        let inst = random_odt(seed, &OdtParams::default());
        let mut game = inst.build().unwrap().game;
        let base = game.rewards["dCosts"].clone();
        game.rewards.insert("scaled".into(), base.iter().map(|r| r * c).collect());
        let blocked = parse("\"attackerBlocked\"").unwrap();
        for opt in [Opt::Min, Opt::Max] {
            let a = expected_reward(&game, &def(), opt, Some("dCosts"), &blocked, opts()).unwrap();
            let b = expected_reward(&game, &def(), opt, Some("scaled"), &blocked, opts()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                if x.is_infinite() {
                    prop_assert!(y.is_infinite());
                } else {
                    prop_assert!((x * c - y).abs() <= TOL * (1.0 + y.abs()));
                }
            }
        }
    }

    #[test]
    fn a_synthesized_strategy_attains_its_value(seed in 0u64..10_000) {
        let inst = random_odt(seed, &OdtParams::default());
        let po = inst.build().unwrap();
        let f = &inst.formulas[1];
        let st = synthesize(&po.game, f, opts()).unwrap();
        let fixed = apply_strategy(&po.game, &st).unwrap();
        let v = check(&po.game, f, opts()).unwrap().init_value();
        let w = check(&fixed, f, opts()).unwrap().init_value();
        // Fixing the defender's optimal choices leaves its value unchanged.
        prop_assert!((v - w).abs() <= TOL, "{} vs {}", v, w);
        let back = Schedule::from_json(&po.game, st.player, &st.to_json(&po.game)).unwrap();
        prop_assert_eq!(back.choices, st.choices);
    }

    #[test]
    fn transformation_preserves_values(seed in 0u64..10_000) {
        let inst = random_odt(seed, &OdtParams::default());
        let po = inst.build().unwrap();
        let t = transform(&po).unwrap();
        for f in &inst.formulas {
            let a = check(&po.game, f, opts()).unwrap().init_value();
            let b = check(&t.game, f, opts()).unwrap().init_value();
            prop_assert!((a - b).abs() <= TOL * (1.0 + a.abs()), "{}: {} vs {}", f, a, b);
        }
    }

    #[test]
    fn formulas_survive_display(seed in 0u64..10_000) {
        for f in random_odt(seed, &OdtParams::default()).formulas {
            prop_assert_eq!(parse(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn defense_json_round_trips(seed in 0u64..10_000) {
        let d = random_odt(seed, &OdtParams::default()).defense;
        prop_assert_eq!(DefenseSpec::from_json(&d.to_json()).unwrap(), d);
    }

    #[test]
    fn expressions_survive_display(e in expr()) {
        let back = parse_expr(&e.to_string()).unwrap();
        prop_assert_eq!(back.to_string(), parse_expr(&back.to_string()).unwrap().to_string());
        for bits in 0u8..8 {
            let val = |v: &str| match v {
                "p" => bits & 1 != 0,
                "q" => bits & 2 != 0,
                _ => bits & 4 != 0,
            };
            prop_assert_eq!(e.eval(&val), back.eval(&val));
        }
    }
}
