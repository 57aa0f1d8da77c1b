use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::engine::{EngineConfig, OnlineConfig, Strategy};
use crate::error::{Error, Result};
use crate::trace::{SyntheticSpec, DEFAULT_SAMPLE_RATE_HZ};

/// One scenario file: data, link, engine, strategies under comparison and
/// the experiment itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub data: DataConfig,
    pub channel: ChannelConfig,
    pub engine: EngineConfig,
    pub strategies: Vec<Strategy>,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSource>,
    /// Synthetic only: independent trajectories generated for pre-training.
    #[serde(default = "default_training_episodes")]
    pub training_episodes: usize,
}

fn default_training_episodes() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    pub path: PathBuf,
    #[serde(default = "one")]
    pub signals_per_dof: usize,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Length of each episode, cut from the held-out part at a seeded
    /// offset. The whole held-out part when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_slots: Option<usize>,
}

fn one() -> usize {
    1
}
fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}
fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub episodes: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// `epsilon`, in normalized units.
    #[serde(default = "default_tolerance")]
    pub success_tolerance: f64,
    #[serde(default = "default_dwell")]
    pub dwell: usize,
    /// Checkpoint slots for task success. Defaults to the waypoint slots of
    /// a minimum-jerk source, or the final slot otherwise.
    #[serde(default)]
    pub waypoints: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_budget: Option<usize>,
}

fn default_tolerance() -> f64 {
    0.05
}
fn default_dwell() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Spacing between harvested training windows.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    /// Pre-trained weights; training runs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub online: OnlineConfig,
}

fn default_layers() -> usize {
    2
}
fn default_hidden() -> usize {
    64
}
fn default_steps() -> usize {
    2000
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_eval_every() -> usize {
    100
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            hidden: default_hidden(),
            steps: default_steps(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            eval_every: default_eval_every(),
            stride: 1,
            seed: 0,
            weights: None,
            online: OnlineConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::InvalidScenario(inner.to_string())
            } else {
                Error::InvalidScenario(format!("{path}: {inner}"))
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a scenario file. Relative data and weight paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text).map_err(|e| match e {
            Error::InvalidScenario(message) => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(trace) = &mut config.data.trace {
            trace.path = resolve(base, &trace.path);
        }
        if let Some(w) = &mut config.training.weights {
            *w = resolve(base, w);
        }
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        match (&self.data.synthetic, &self.data.trace) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return bad("data needs exactly one of `synthetic` or `trace`"),
        }
        if self.data.synthetic.is_some() && self.data.training_episodes == 0 {
            return bad("data.training_episodes must be >= 1");
        }
        self.channel.validate()?;
        self.engine.validate()?;
        if self.strategies.is_empty() {
            return bad("strategies must list at least one strategy");
        }
        let e = &self.experiment;
        if e.episodes == 0 {
            return bad("experiment.episodes must be >= 1");
        }
        if !(e.success_tolerance > 0.0) {
            return bad("experiment.success_tolerance must be > 0");
        }
        if e.dwell == 0 {
            return bad("experiment.dwell must be >= 1");
        }
        let t = &self.training;
        if t.layers == 0 || t.hidden == 0 || t.batch_size == 0 || t.eval_every == 0 {
            return bad("training layers, hidden, batch_size and eval_every must be >= 1");
        }
        if !(t.learning_rate > 0.0) {
            return bad("training.learning_rate must be > 0");
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
