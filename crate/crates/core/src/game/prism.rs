//! PRISM-games SMG export of an explicit game.
//!
//! States are encoded by a single global index variable `s`; each player
//! owns one module holding the commands of its states. Output depends only on
//! the game's canonical orderings, so it is byte-stable.

use super::{Player, StochasticGame};
use std::fmt::Write;

fn ident(label: &str) -> String {
    let mut out: String = label
        .replace('#', "_dop")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, 'a');
    }
    out
}

/// Returns the model file and a properties file listing `properties`.
pub fn export_prism(game: &StochasticGame, properties: &[String]) -> (String, String) {
    let n = game.num_states();
    let mut m = String::new();
    writeln!(m, "// {} states, {} choices", n, game.num_transitions()).unwrap();
    m.push_str("smg\n\n");
    for module in ["attacker", "defender"] {
        writeln!(m, "player {module}_player\n  {module}\nendplayer").unwrap();
    }
    writeln!(m, "\nglobal s : [0..{}] init {};", n.saturating_sub(1), game.init).unwrap();

    for (player, module) in [(Player::Attacker, "attacker"), (Player::Defender, "defender")] {
        writeln!(m, "\nmodule {module}").unwrap();
        for (s, cs) in game.choices.iter().enumerate() {
            if game.player(s) != player {
                continue;
            }
            for c in cs {
                let branches: Vec<String> = c
                    .dist
                    .iter()
                    .map(|(t, p)| format!("{p}:(s'={t})"))
                    .collect();
                writeln!(
                    m,
                    "  [{}] s={} -> {};",
                    ident(&game.actions[c.action].label),
                    s,
                    branches.join(" + ")
                )
                .unwrap();
            }
        }
        m.push_str("endmodule\n");
    }

    m.push('\n');
    for (name, set) in &game.labels {
        let members: Vec<String> = set.iter().map(|s| format!("s={s}")).collect();
        let body = if members.is_empty() {
            "false".to_string()
        } else {
            members.join(" | ")
        };
        writeln!(m, "label \"{name}\" = {body};").unwrap();
    }

    for (name, values) in &game.rewards {
        writeln!(m, "\nrewards \"{name}\"").unwrap();
        for (a, v) in values.iter().enumerate() {
            if *v != 0.0 {
                writeln!(m, "  [{}] true : {};", ident(&game.actions[a].label), v).unwrap();
            }
        }
        m.push_str("endrewards\n");
    }

    let mut props = String::new();
    for p in properties {
        let p = p.replace("<<def>>", "<<defender_player>>")
            .replace("<<att>>", "<<attacker_player>>");
        writeln!(props, "{p}").unwrap();
    }
    (m, props)
}

#[cfg(test)]
mod tests {
    use super::super::{ActionInfo, Choice, GameState, Player, StochasticGame};
    use super::*;
    use crate::bits::{Bits, StateSet};
    use std::collections::BTreeMap;

    fn tiny() -> StochasticGame {
        let st = |turn| GameState {
            a: Bits::with_len(1),
            d: Bits::with_len(0),
            turn,
        };
        StochasticGame {
            attacker_vars: vec!["e".into()],
            defender_vars: vec![],
            states: vec![st(Player::Attacker), st(Player::Defender)],
            init: 0,
            actions: vec![
                ActionInfo {
                    label: "r#0".into(),
                    owner: Player::Attacker,
                    ty: "r".into(),
                    idle: false,
                },
                ActionInfo {
                    label: "idle_D".into(),
                    owner: Player::Defender,
                    ty: "idle_D".into(),
                    idle: true,
                },
            ],
            choices: vec![
                vec![Choice {
                    action: 0,
                    dist: vec![(1, 0.68), (0, 0.32)],
                }],
                vec![Choice {
                    action: 1,
                    dist: vec![(0, 1.0)],
                }],
            ],
            labels: BTreeMap::from([("goal".to_string(), StateSet::from_fn(2, |s| s == 1))]),
            rewards: BTreeMap::from([("aCosts".to_string(), vec![2.5, 0.0])]),
        }
    }

    #[test]
    fn export_shape() {
        let (m, p) = export_prism(&tiny(), &["<<def>> Pmin=? [ F \"goal\" ]".to_string()]);
        assert!(m.contains("smg\n"));
        assert!(m.contains("player attacker_player\n  attacker\nendplayer"));
        assert!(m.contains("  [r_dop0] s=0 -> 0.68:(s'=1) + 0.32:(s'=0);"));
        assert!(m.contains("label \"goal\" = s=1;"));
        assert!(m.contains("rewards \"aCosts\"\n  [r_dop0] true : 2.5;\nendrewards"));
        assert_eq!(p, "<<defender_player>> Pmin=? [ F \"goal\" ]\n");
        assert_eq!(export_prism(&tiny(), &[]).0, m);
    }
}
