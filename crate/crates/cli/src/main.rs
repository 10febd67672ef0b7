//! `posecgame`: attack models to attack-defense games, partial-observation
//! transformation, rPATL checking, synthesis and soundness verification.
//!
//! Exit status is 0 when every requested check passes, 1 when a check fails
//! and 2 on errors.

mod config;
mod pipeline;
mod sweep;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::PipelineConfig;
use pipeline::*;
use posecgame::game::{export_prism, Player};
use posecgame::rpatl::{Coalition, RpatlFormula, StateFormula};
use posecgame::threat_model::{export_mulval, import_mulval, AttackGraph};
use posecgame::verify::{random_odt, OdtParams};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "posecgame", version, about = "Attack-defense games from attack graphs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation and random instances.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Value-iteration convergence threshold.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Also write the analysed game as PRISM files.
    #[arg(long, global = true)]
    export_prism: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Attack-model files.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Attack graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Game construction.
    #[command(subcommand)]
    Game(GameCmd),
    /// Partial observation.
    #[command(subcommand)]
    Po(PoCmd),
    /// Check rPATL formulas on the analysed game.
    Check {
        /// Formulas to check instead of the configured ones.
        #[arg(long = "formula")]
        formulas: Vec<String>,
    },
    /// Synthesize defender strategies.
    Synthesize {
        #[arg(long = "formula")]
        formulas: Vec<String>,
    },
    /// Simulate a synthesized defender.
    Simulate {
        /// A `<<def>> P.. [F target]` query.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        runs: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Uniform attacker instead of the optimal counter-strategy.
        #[arg(long)]
        uniform: bool,
    },
    /// Soundness checks of the partial-observation transformation.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Sweep one parameter and tabulate sizes and values.
    Sweep {
        #[arg(long, value_enum)]
        axis: sweep::Axis,
        /// Largest count, or the number of steps for defense strength.
        #[arg(long, default_value_t = 4)]
        max: usize,
    },
    /// Exports.
    #[command(subcommand)]
    Export(ExportCmd),
    /// The whole pipeline, every stage persisted.
    Run,
}

#[derive(Subcommand, Debug)]
enum ModelCmd {
    /// Parse an attack model and report its diagnostics.
    Check { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Ground an attack model into an attack graph.
    Gen {
        #[arg(long, requires = "goal")]
        model: Option<PathBuf>,
        #[arg(long)]
        goal: Option<String>,
    },
    /// Import a MulVAL VERTICES/ARCS pair.
    Import {
        #[arg(long)]
        vertices: PathBuf,
        #[arg(long)]
        arcs: PathBuf,
    },
    /// Cumulative attack-graph probabilities.
    Score {
        /// Graph JSON instead of the configured input.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GameCmd {
    /// Build the attack-defense game.
    Build,
}

#[derive(Subcommand, Debug)]
enum PoCmd {
    /// Transform the partially observable game into a perfect one.
    Transform,
}

#[derive(Subcommand, Debug)]
enum VerifyCmd {
    /// Dual check, weak bisimulation and strategy lifting.
    Soundness {
        /// Check this many seeded random instances instead of the config.
        #[arg(long)]
        random: Option<u64>,
    },
}

#[derive(Subcommand, Debug)]
enum ExportCmd {
    /// PRISM model and properties files.
    Prism,
}

struct Ctx {
    global: Global,
}

impl Ctx {
    fn config(&self) -> Result<PipelineConfig> {
        let path = self.global.config.as_ref().ok_or_else(|| anyhow!("this command needs --config"))?;
        let mut cfg = stage("config", PipelineConfig::load(path))?;
        cfg.seed = self.global.seed.or(cfg.seed);
        cfg.epsilon = self.global.epsilon.or(cfg.epsilon);
        cfg.max_iters = self.global.max_iters.or(cfg.max_iters);
        Ok(cfg)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.global.out).with_context(|| format!("creating {}", self.global.out.display()))?;
        let path = self.global.out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, v: &Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(v)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn prism(&self, game: &posecgame::game::StochasticGame, formulas: &[String]) -> Result<()> {
        let (model, props) = export_prism(game, formulas);
        self.write("model.prism", &model)?;
        self.write("model.props", &props)?;
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn print_written(path: &Path) {
    println!("wrote {}", path.display());
}

/// Defender queries that a strategy can be synthesized for.
fn synthesizable(f: &RpatlFormula) -> bool {
    let def = Coalition::of(&[Player::Defender]);
    matches!(f, StateFormula::Prob { coalition, .. } | StateFormula::Reward { coalition, .. } if *coalition == def)
}

fn graph_files(ctx: &Ctx, g: &AttackGraph) -> Result<()> {
    print_written(&ctx.write("graph.json", &(g.to_json() + "\n"))?);
    let (v, a) = export_mulval(g);
    ctx.write("VERTICES.CSV", &v)?;
    ctx.write("ARCS.CSV", &a)?;
    println!("{}", graph_summary(g));
    Ok(())
}

fn check_cmd(ctx: &Ctx, extra: &[String]) -> Result<bool> {
    let cfg = ctx.config()?;
    let texts = if extra.is_empty() { cfg.formulas.clone() } else { extra.to_vec() };
    let formulas = stage("check", parse_formulas(&texts))?;
    let inp = Inputs::load(&cfg)?;
    let a = analyse(&cfg, &inp, &inp.observable)?;
    let checked = stage("check", check_all(a.game(), &formulas, cfg.options()))?;
    let mut out = checked.json;
    out["game"] = json!(a.kind());
    print_written(&ctx.write_json("check.json", &out)?);
    for (t, v) in texts.iter().zip(&checked.values) {
        println!("{t}: {v}");
    }
    if ctx.global.export_prism {
        ctx.prism(a.game(), &texts)?;
    }
    Ok(checked.holds)
}

fn synthesize_cmd(ctx: &Ctx, extra: &[String]) -> Result<bool> {
    let cfg = ctx.config()?;
    let texts = if extra.is_empty() { cfg.formulas.clone() } else { extra.to_vec() };
    let formulas = stage("synthesize", parse_formulas(&texts))?;
    let inp = Inputs::load(&cfg)?;
    let a = analyse(&cfg, &inp, &inp.observable)?;
    let game = a.game();
    let mut index = Vec::new();
    for (i, f) in formulas.iter().enumerate().filter(|(_, f)| synthesizable(f)) {
        let st = stage("synthesize", synthesize_all(game, std::slice::from_ref(f), cfg.options()))?.remove(0);
        let name = format!("strategy-{i}.json");
        ctx.write(&name, &(st.to_json(game) + "\n"))?;
        index.push(json!({"formula": f.to_string(), "file": name, "value": num(st.value), "converged": st.converged}));
    }
    print_written(&ctx.write_json("strategies.json", &json!({"game": a.kind(), "strategies": index}))?);
    Ok(true)
}

fn simulate_cmd(ctx: &Ctx, formula: Option<String>, runs: Option<u64>, horizon: Option<usize>, uniform: bool) -> Result<bool> {
    let cfg = ctx.config()?;
    let sim = cfg.simulate.clone();
    let text = formula
        .or_else(|| sim.as_ref().map(|s| s.formula.clone()))
        .ok_or_else(|| anyhow!("no formula to simulate"))?;
    let runs = runs.or(sim.as_ref().map(|s| s.runs)).unwrap_or(10_000);
    let horizon = horizon.or(sim.as_ref().map(|s| s.horizon)).unwrap_or(10_000);
    let uniform = uniform || sim.as_ref().is_some_and(|s| s.uniform);
    let f = stage("simulate", parse_formulas(&[text]))?.remove(0);
    let inp = Inputs::load(&cfg)?;
    let a = analyse(&cfg, &inp, &inp.observable)?;
    let out = stage(
        "simulate",
        simulate(a.game(), &f, runs, horizon, uniform, cfg.seed.unwrap_or(0), cfg.options()),
    )?;
    print_written(&ctx.write_json("simulate.json", &out)?);
    Ok(true)
}

fn verify_cmd(ctx: &Ctx, random: Option<u64>) -> Result<bool> {
    let mut instances = Vec::new();
    let mut passed = true;
    match random {
        Some(n) => {
            let base = ctx.global.seed.unwrap_or(0);
            let opts = posecgame::rpatl::Options {
                epsilon: ctx.global.epsilon.unwrap_or(1e-8),
                max_iters: ctx.global.max_iters.unwrap_or(1_000_000),
            };
            for seed in base..base + n {
                let inst = random_odt(seed, &OdtParams::default());
                let po = stage("game", inst.build().map_err(Into::into))?;
                let s = stage("verify", soundness(&po, &inst.formulas, opts))?;
                passed &= s.passed;
                let mut j = s.json;
                j["seed"] = json!(seed);
                instances.push(j);
            }
        }
        None => {
            let cfg = ctx.config()?;
            let formulas = stage("verify", parse_formulas(&cfg.formulas))?;
            let inp = Inputs::load(&cfg)?;
            let po = stage("game", build_po(&cfg, &inp, &inp.observable))?;
            let s = stage("verify", soundness(&po, &formulas, cfg.options()))?;
            passed = s.passed;
            instances.push(s.json);
        }
    }
    let path = ctx.write_json("agreement.json", &json!({"passed": passed, "instances": instances}))?;
    print_written(&path);
    println!("soundness {}", if passed { "passed" } else { "FAILED" });
    Ok(passed)
}

fn run_cmd(ctx: &Ctx) -> Result<bool> {
    let cfg = ctx.config()?;
    let opts = cfg.options();
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["stage", "states", "transitions", "formula", "value", "seconds"])?;
    let mut row = |stage: &str, sizes: Option<(usize, usize)>, formula: &str, value: String, t: Instant| -> Result<()> {
        let (s, tr) = sizes.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        summary.write_record([stage, &s, &tr, formula, &value, &format!("{:.3}", t.elapsed().as_secs_f64())])?;
        Ok(())
    };

    let t = Instant::now();
    let formulas = stage("check", parse_formulas(&cfg.formulas))?;
    let inp = Inputs::load(&cfg)?;
    ctx.write("graph.json", &(inp.graph.to_json() + "\n"))?;
    row("graph", Some((inp.graph.nodes.len(), inp.graph.edges.len())), "", String::new(), t)?;

    let t = Instant::now();
    let a = analyse(&cfg, &inp, &inp.observable)?;
    ctx.write_json("game.json", &game_summary(&a.po.game))?;
    row("game", Some((a.po.game.num_states(), a.po.game.num_transitions())), "", String::new(), t)?;
    if let Some(tr) = &a.transformed {
        ctx.write("transform.json", &(tr.report.to_json() + "\n"))?;
        row("transform", Some((tr.game.num_states(), tr.game.num_transitions())), "", String::new(), t)?;
    }
    let game = a.game();

    let mut ok = true;
    let t = Instant::now();
    let mut checked = stage("check", check_all(game, &formulas, opts))?;
    checked.json["game"] = json!(a.kind());
    ctx.write_json("check.json", &checked.json)?;
    ok &= checked.holds;
    for (f, v) in cfg.formulas.iter().zip(&checked.values) {
        row("check", None, f, v.to_string(), t)?;
    }

    let t = Instant::now();
    let mut index = Vec::new();
    for (i, f) in formulas.iter().enumerate().filter(|(_, f)| synthesizable(f)) {
        let st = stage("synthesize", synthesize_all(game, std::slice::from_ref(f), opts))?.remove(0);
        let name = format!("strategy-{i}.json");
        ctx.write(&name, &(st.to_json(game) + "\n"))?;
        index.push(json!({"formula": f.to_string(), "file": name, "value": num(st.value)}));
        row("synthesize", None, &cfg.formulas[i], st.value.to_string(), t)?;
    }
    ctx.write_json("strategies.json", &json!({"game": a.kind(), "strategies": index}))?;

    if let Some(sim) = &cfg.simulate {
        let t = Instant::now();
        let f = stage("simulate", parse_formulas(std::slice::from_ref(&sim.formula)))?.remove(0);
        let out = stage(
            "simulate",
            simulate(game, &f, sim.runs, sim.horizon, sim.uniform, cfg.seed.unwrap_or(0), opts),
        )?;
        row("simulate", None, &sim.formula, out["estimate"]["estimate"].to_string(), t)?;
        ctx.write_json("simulate.json", &out)?;
    }

    if a.transformed.is_some() {
        let t = Instant::now();
        let s = stage("verify", soundness(&a.po, &formulas, opts))?;
        ok &= s.passed;
        ctx.write_json("agreement.json", &s.json)?;
        row("verify", None, "", s.passed.to_string(), t)?;
    }
    if ctx.global.export_prism {
        ctx.prism(game, &cfg.formulas)?;
    }
    let csv = String::from_utf8(summary.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    print_written(&ctx.write("summary.csv", &csv)?);
    print!("{csv}");
    Ok(ok)
}

fn dispatch(ctx: &Ctx, cmd: Command) -> Result<bool> {
    match cmd {
        Command::Model(ModelCmd::Check { file }) => {
            let m = stage("model", load_model(&file))?;
            println!("{}", serde_json::to_string_pretty(&model_summary(&m))?);
            Ok(true)
        }
        Command::Graph(GraphCmd::Gen { model, goal }) => {
            let g = match (model, goal) {
                (Some(m), Some(goal)) => stage("graph", load_model(&m).and_then(|m| ground_model(&m, &goal)))?,
                _ => stage("graph", load_graph(&ctx.config()?))?,
            };
            graph_files(ctx, &g)?;
            Ok(true)
        }
        Command::Graph(GraphCmd::Import { vertices, arcs }) => {
            let g = stage("graph", (|| Ok(import_mulval(&read(&vertices)?, &read(&arcs)?)?))())?;
            graph_files(ctx, &g)?;
            Ok(true)
        }
        Command::Graph(GraphCmd::Score { graph }) => {
            let (g, overrides) = match graph {
                Some(p) => (
                    stage("graph", AttackGraph::from_json(&read(&p)?).map_err(|e| anyhow!("{}: {e}", p.display())))?,
                    Default::default(),
                ),
                None => {
                    let cfg = ctx.config()?;
                    (stage("graph", load_graph(&cfg))?, cfg.scores.clone())
                }
            };
            let scores = stage("score", score_graph(&g, &overrides))?;
            print_written(&ctx.write_json("scores.json", &scores)?);
            Ok(true)
        }
        Command::Game(GameCmd::Build) => {
            let cfg = ctx.config()?;
            let inp = Inputs::load(&cfg)?;
            let po = stage("game", build_po(&cfg, &inp, &inp.observable))?;
            let summary = game_summary(&po.game);
            print_written(&ctx.write_json("game.json", &summary)?);
            if ctx.global.export_prism {
                ctx.prism(&po.game, &cfg.formulas)?;
            }
            Ok(true)
        }
        Command::Po(PoCmd::Transform) => {
            let cfg = ctx.config()?;
            let inp = Inputs::load(&cfg)?;
            let po = stage("game", build_po(&cfg, &inp, &inp.observable))?;
            let cap = cfg.state_cap.unwrap_or(posecgame::game::DEFAULT_GAME_CAP);
            let t = stage("transform", posecgame::pogame::transform_with_cap(&po, cap).map_err(Into::into))?;
            print_written(&ctx.write("transform.json", &(t.report.to_json() + "\n"))?);
            if ctx.global.export_prism {
                ctx.prism(&t.game, &cfg.formulas)?;
            }
            Ok(true)
        }
        Command::Check { formulas } => check_cmd(ctx, &formulas),
        Command::Synthesize { formulas } => synthesize_cmd(ctx, &formulas),
        Command::Simulate {
            formula,
            runs,
            horizon,
            uniform,
        } => simulate_cmd(ctx, formula, runs, horizon, uniform),
        Command::Verify(VerifyCmd::Soundness { random }) => verify_cmd(ctx, random),
        Command::Sweep { axis, max } => {
            let cfg = ctx.config()?;
            let cells = stage("sweep", sweep::sweep(&cfg, axis, max))?;
            let csv = sweep::to_csv(axis, &cfg.formulas, &cells)?;
            print_written(&ctx.write("sweep.csv", &csv)?);
            print!("{csv}");
            Ok(true)
        }
        Command::Export(ExportCmd::Prism) => {
            let cfg = ctx.config()?;
            let inp = Inputs::load(&cfg)?;
            let a = analyse(&cfg, &inp, &inp.observable)?;
            ctx.prism(a.game(), &cfg.formulas)?;
            println!("wrote {}", ctx.global.out.join("model.prism").display());
            Ok(true)
        }
        Command::Run => run_cmd(ctx),
    }
}

/// Caps the worker pool when `POSECGAME_THREADS` is set.
fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("POSECGAME_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow!("POSECGAME_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { global: cli.global };
    match init_threads().and_then(|()| dispatch(&ctx, cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
