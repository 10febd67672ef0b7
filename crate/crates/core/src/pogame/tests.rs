use super::*;
use crate::fixtures::{plycent_defense, plycent_graph};
use crate::rpatl::{check, parse, Options};
use std::time::Instant;

fn set(ids: &[NodeId]) -> BTreeSet<NodeId> {
    ids.iter().copied().collect()
}

fn prereq_sets(d: &[DopSet]) -> BTreeSet<BTreeSet<NodeId>> {
    d.iter().map(|x| x.prereqs.clone()).collect()
}

#[test]
fn dop_of_pivot_with_hidden_tampering() {
    let g = plycent_graph();
    let start = Instant::now();
    let d = do_prerequisites(&g, 5, &set(&[2, 5, 11]));
    assert_eq!(prereq_sets(&d), BTreeSet::from([set(&[6, 9, 10])]));
    assert_eq!(d[0].path, set(&[5, 8]));
    let d = do_prerequisites(&g, 2, &set(&[2, 8, 11]));
    assert_eq!(
        prereq_sets(&d),
        BTreeSet::from([set(&[14, 15, 4, 3]), set(&[14, 15, 6, 7, 3])])
    );
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn aggregated_direct_path() {
    let g = plycent_graph();
    let obs = observable_attacker(&g, &BTreeMap::new(), &set(&[2])).unwrap();
    let path0 = &obs.actions[0];
    assert_eq!(path0.label, "remote_DOS#0");
    assert_eq!(path0.dop.prereqs, set(&[3, 12, 13, 14, 15]));
    assert_eq!(path0.dop.path, set(&[2, 11]));
    assert!((path0.prob - 0.74 * 0.92).abs() < 1e-12);
    let t = &obs.smdp.transitions[0];
    let names = g.capability_names();
    let mut lits: BTreeSet<(String, bool)> = [3, 12, 13, 14, 15].iter().map(|n| (names[n].clone(), true)).collect();
    lits.insert((names[&1].clone(), false));
    assert_eq!(t.guard.literals().unwrap(), lits);
    assert_eq!(t.dist.len(), 2);
    assert!((t.dist[0].1 - (1.0 - 0.6808)).abs() < 1e-12);
    assert_eq!(obs.actions.len(), 2);
    assert_eq!(obs.actions[1].dop.path, set(&[2, 5, 8]));
    assert_eq!(obs.smdp.action_types["remote_DOS#1"], "remote_DOS");
}

#[test]
fn aggregated_rewards_sum_over_path() {
    let g = plycent_graph();
    let obs = observable_attacker(&g, &BTreeMap::new(), &set(&[2])).unwrap();
    let rs = crate::smdp::attacker_rewards(&g, "aCosts", false);
    let lifted = obs.lift_rewards(&g, &rs);
    assert_eq!(lifted.get("remote_DOS#0"), 4.0 + 1.0);
    assert_eq!(lifted.get("remote_DOS#1"), 4.0 + 2.0 + 3.0);
}

fn po(observable: &[NodeId], sched: Scheduler) -> PoGame {
    let g = plycent_graph();
    let defense = plycent_defense();
    let mut rewards = vec![crate::smdp::attacker_rewards(&g, "aCosts", false)];
    rewards.push(defense.costs("dCosts"));
    PoGame::build(PoConfig {
        graph: &g,
        probs: &BTreeMap::new(),
        observable: &set(observable),
        defense: &defense,
        scheduler: &sched,
        rewards: &rewards,
        cap: DEFAULT_GAME_CAP,
    })
    .unwrap()
}

#[test]
fn hidden_moves_stay_with_the_attacker() {
    let p = po(&[2, 8, 11], Scheduler::Alternation);
    assert_eq!(p.up("multi_hop"), UpdateScope::AttackerOnly);
    assert_eq!(p.up("memory_tamper"), UpdateScope::Both);
    let g = &p.game;
    let hop = g.action_index("multi_hop").unwrap();
    for (s, cs) in g.choices.iter().enumerate() {
        for c in cs.iter().filter(|c| c.action == hop) {
            for &(t, _) in &c.dist {
                assert_eq!(g.player(t), Player::Attacker);
                assert_eq!(p.obs(t).0, p.obs(s).0);
            }
        }
    }
    assert!(p.odt_check().is_ok());
}

#[test]
fn hidden_trigger_is_not_odt() {
    let p = po(&[2, 5, 11], Scheduler::Alternation);
    assert!(matches!(p.odt_check(), Err(PoError::NotOdt(v)) if v == ["exeCode_plycent02_root"]));
    assert!(matches!(transform(&p), Err(PoError::NotOdt(_))));
}

#[test]
fn transform_preserves_defense_values() {
    let sched = Scheduler::TriggerSet(BTreeSet::from(["memory_tamper".to_string()]));
    let p = po(&[2, 8, 11], sched);
    let t = transform(&p).unwrap();
    assert_eq!(t.report.dop_counts["remote_DOS"], 2);
    assert_eq!(t.report.hidden_rules, vec!["multi_hop".to_string()]);
    for f in [
        "<<def>> Pmin=? [F \"systemDown_plycent03\"]",
        "<<def>> Pmax=? [F \"attackerBlocked\" & !\"systemDown_plycent03\"]",
    ] {
        let f = parse(f).unwrap();
        assert!(p.classify_objective(&f).is_ok());
        let a = check(&p.game, &f, Options::default()).unwrap().init_value();
        let b = check(&t.game, &f, Options::default()).unwrap().init_value();
        assert!((a - b).abs() < 1e-6, "{f}: {a} vs {b}");
    }
}

#[test]
fn fully_observable_transform_matches_perfect_game() {
    let p = po(&[2, 5, 8, 11], Scheduler::Alternation);
    let t = transform(&p).unwrap();
    assert_eq!(t.game.num_states(), p.game.num_states());
    assert_eq!(t.game.num_transitions(), p.game.num_transitions());
}

#[test]
fn objective_classification() {
    let p = po(&[2, 8, 11], Scheduler::Alternation);
    let ok = parse("<<def>> Pmax=? [F \"attackerBlocked\"]").unwrap();
    assert!(p.classify_objective(&ok).is_ok());
    let x = parse("<<def>> Pmax=? [X \"attackerBlocked\"]").unwrap();
    assert!(p.classify_objective(&x).unwrap_err().contains("step"));
    let hidden = parse("<<def>> Pmin=? [F \"netAccess_plycent03_tcp_22\"]").unwrap();
    let p2 = po(&[2, 8], Scheduler::Alternation);
    assert!(p2.classify_objective(&hidden).unwrap_err().contains("netAccess"));
    let att = parse("<<att>> Pmax=? [F \"systemDown_plycent03\"]").unwrap();
    assert!(p.classify_objective(&att).is_err());
}

#[test]
fn observation_spec_resolution() {
    let g = plycent_graph();
    let spec = ObservationSpec::from_json(r#"{"observable_actions": ["remote_DOS", "8"]}"#).unwrap();
    assert_eq!(spec.resolve(&g).unwrap(), set(&[2, 8]));
    let bad = ObservationSpec::from_json(r#"{"observable_actions": ["nope"]}"#).unwrap();
    assert!(matches!(bad.resolve(&g), Err(PoError::UnknownObservable(_))));
    assert!(matches!(ObservationSpec::from_json("{"), Err(PoError::Config(_))));
    assert_eq!(ObservationSpec::all(&g).resolve(&g).unwrap(), set(&[2, 5, 8, 11]));
}
