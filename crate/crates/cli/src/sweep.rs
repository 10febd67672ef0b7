//! Parameter sweeps over one axis; cells run in parallel and are reported in
//! axis order.

use crate::config::PipelineConfig;
use crate::pipeline::{analyse, build_po, ground_model, hideable_rules, load_model, parse_formulas, rewards, Inputs};
use anyhow::{anyhow, bail, Result};
use clap::ValueEnum;
use posecgame::pogame::ObservationSpec;
use posecgame::rpatl::{check, RpatlFormula};
use posecgame::smdp::DefenseSpec;
use posecgame::threat_model::NodeId;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Hide 0..=max attack steps, one more per cell.
    UnobservableCount,
    /// Keep 0%..100% of the defense rules in `max` equal steps.
    DefenseStrength,
    /// Keep the first 0..=n `vul*` facts of the attack model.
    VulnCount,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::UnobservableCount => "unobservable_count",
            Axis::DefenseStrength => "defense_strength",
            Axis::VulnCount => "vuln_count",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub value: usize,
    pub states: Option<usize>,
    pub transitions: Option<usize>,
    pub values: Vec<Option<f64>>,
    pub seconds: f64,
    pub error: Option<String>,
}

/// States, transitions, formula values and per-formula errors of one cell.
type Measured = (usize, usize, Vec<Option<f64>>, Option<String>);

fn measure(cfg: &PipelineConfig, inp: &Inputs, observable: &BTreeSet<NodeId>, formulas: &[RpatlFormula]) -> Result<Measured> {
    let a = analyse(cfg, inp, observable)?;
    let game = a.game();
    let mut errors = Vec::new();
    let values = formulas
        .iter()
        .map(|f| match check(game, f, cfg.options()) {
            Ok(r) => Some(r.init_value()),
            Err(e) => {
                errors.push(format!("{f}: {e}"));
                None
            }
        })
        .collect();
    let err = (!errors.is_empty()).then(|| errors.join("; "));
    Ok((game.num_states(), game.num_transitions(), values, err))
}

fn cell(value: usize, formulas: usize, run: impl FnOnce() -> Result<Measured>) -> Cell {
    let start = Instant::now();
    let r = run();
    let seconds = start.elapsed().as_secs_f64();
    match r {
        Ok((states, transitions, values, error)) => Cell {
            value,
            states: Some(states),
            transitions: Some(transitions),
            values,
            seconds,
            error,
        },
        Err(e) => Cell {
            value,
            states: None,
            transitions: None,
            values: vec![None; formulas],
            seconds,
            error: Some(format!("{e:#}")),
        },
    }
}

pub fn sweep(cfg: &PipelineConfig, axis: Axis, max: usize) -> Result<Vec<Cell>> {
    let formulas = parse_formulas(&cfg.formulas)?;
    let nf = formulas.len();
    let inp = Inputs::load(cfg)?;
    let cells = match axis {
        Axis::UnobservableCount => {
            let po = build_po(cfg, &inp, &inp.observable)?;
            let order = hideable_rules(&inp, &po.triggers);
            let ks: Vec<usize> = (0..=max.min(order.len())).collect();
            ks.par_iter()
                .map(|&k| {
                    cell(k, nf, || {
                        let mut obs = inp.observable.clone();
                        for r in &order[..k] {
                            obs.remove(r);
                        }
                        measure(cfg, &inp, &obs, &formulas)
                    })
                })
                .collect()
        }
        Axis::DefenseStrength => {
            let steps = max.max(1);
            let n = inp.defense.rules.len();
            (0..=steps)
                .into_par_iter()
                .map(|i| {
                    let pct = 100 * i / steps;
                    cell(pct, nf, || {
                        let keep = (n * pct + 50) / 100;
                        let defense = DefenseSpec {
                            rules: inp.defense.rules[..keep].to_vec(),
                            init: inp.defense.init.clone(),
                        };
                        let rewards = rewards(cfg, &inp.graph, &defense);
                        let cut = Inputs {
                            graph: inp.graph.clone(),
                            defense,
                            observable: inp.observable.clone(),
                            rewards,
                        };
                        measure(cfg, &cut, &cut.observable, &formulas)
                    })
                })
                .collect()
        }
        Axis::VulnCount => {
            let path = cfg.model.as_ref().ok_or_else(|| anyhow!("vuln-count needs an attack model, not a MulVAL import"))?;
            let model = load_model(path)?;
            let vulns: Vec<usize> = (0..model.facts.len()).filter(|&i| model.facts[i].atom.name.starts_with("vul")).collect();
            if vulns.is_empty() {
                bail!("the attack model has no vul* facts");
            }
            let spec = match &cfg.observation {
                Some(p) => Some(ObservationSpec::from_json(&std::fs::read_to_string(p)?)?),
                None => None,
            };
            (0..=vulns.len().min(max))
                .into_par_iter()
                .map(|k| {
                    cell(k, nf, || {
                        let dropped: BTreeSet<usize> = vulns[k..].iter().copied().collect();
                        let mut m = model.clone();
                        m.facts = model
                            .facts
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| !dropped.contains(i))
                            .map(|(_, f)| f.clone())
                            .collect();
                        let graph = ground_model(&m, cfg.goal.as_deref().unwrap_or_default())?;
                        let observable = match &spec {
                            Some(s) => s.resolve(&graph)?,
                            None => graph.rule_nodes().into_iter().collect(),
                        };
                        let rewards = rewards(cfg, &graph, &inp.defense);
                        let cut = Inputs {
                            graph,
                            defense: inp.defense.clone(),
                            observable,
                            rewards,
                        };
                        measure(cfg, &cut, &cut.observable, &formulas)
                    })
                })
                .collect()
        }
    };
    Ok(cells)
}

/// CSV with one row per cell; values are empty where a cell failed.
pub fn to_csv(axis: Axis, formulas: &[String], cells: &[Cell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![axis.name().to_string(), "states".into(), "transitions".into()];
    header.extend(formulas.iter().cloned());
    header.extend(["seconds".to_string(), "error".to_string()]);
    w.write_record(&header)?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in cells {
        let mut row = vec![c.value.to_string(), opt(c.states), opt(c.transitions)];
        row.extend(c.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        row.push(format!("{:.3}", c.seconds));
        row.push(c.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}
