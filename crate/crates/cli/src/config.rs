//! Pipeline configuration, read from JSON.
//!
//! Relative paths are resolved against the directory of the config file.

use anyhow::{bail, Context, Result};
use posecgame::game::Scheduler;
use posecgame::rpatl::Options;
use posecgame::threat_model::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MulvalInput {
    pub vertices: PathBuf,
    pub arcs: PathBuf,
}

/// A weighted sum of the cost sources an action can carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDef {
    pub name: String,
    /// Weight of the rule nodes' attack costs.
    #[serde(default)]
    pub attack: f64,
    /// Weight of the rule nodes' damage.
    #[serde(default)]
    pub damage: f64,
    /// Weight of the defense rules' costs.
    #[serde(default)]
    pub defense: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// A `<<def>>` reachability query; its target is simulated.
    pub formula: String,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Uniform attacker instead of the synthesized counter-strategy.
    #[serde(default)]
    pub uniform: bool,
}

fn default_runs() -> u64 {
    10_000
}

fn default_horizon() -> usize {
    10_000
}

fn default_scheduler() -> Scheduler {
    Scheduler::Alternation
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Horn-clause attack model; needs `goal`.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// MulVAL CSV export, the alternative to `model`.
    #[serde(default)]
    pub mulval: Option<MulvalInput>,
    /// Goal atom such as `execCode('db','root')`.
    #[serde(default)]
    pub goal: Option<String>,
    /// Success probability overrides by rule node.
    #[serde(default)]
    pub scores: BTreeMap<NodeId, f64>,
    /// Defense rules; without them the defender can only idle.
    #[serde(default)]
    pub defense: Option<PathBuf>,
    #[serde(default = "default_scheduler")]
    pub scheduler: Scheduler,
    /// Observation spec; every attack step is observable without one.
    #[serde(default)]
    pub observation: Option<PathBuf>,
    #[serde(default)]
    pub rewards: Vec<RewardDef>,
    #[serde(default)]
    pub formulas: Vec<String>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub state_cap: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.model.iter_mut().for_each(fix);
        self.defense.iter_mut().for_each(fix);
        self.observation.iter_mut().for_each(fix);
        if let Some(m) = &mut self.mulval {
            fix(&mut m.vertices);
            fix(&mut m.arcs);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.model, &self.mulval) {
            (Some(_), Some(_)) => bail!("config names both an attack model and a MulVAL import"),
            (None, None) => bail!("config names neither an attack model nor a MulVAL import"),
            (Some(_), None) if self.goal.is_none() => bail!("an attack model needs a goal"),
            _ => {}
        }
        let mut files: Vec<&PathBuf> = self.model.iter().chain(&self.defense).chain(&self.observation).collect();
        if let Some(m) = &self.mulval {
            files.extend([&m.vertices, &m.arcs]);
        }
        for f in files {
            if !f.is_file() {
                bail!("referenced file {} does not exist", f.display());
            }
        }
        Ok(())
    }

    pub fn options(&self) -> Options {
        let d = Options::default();
        Options {
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
        }
    }
}
