//! The support engine: history buffer, slots-since-receipt counter and the
//! routing between the received command, the short-term (AR) prediction,
//! the long-term (GRU) block and hold-last.

mod online;
mod state;

pub use online::{short_term_avg_ae, OnlineConfig, OnlineTrainer, TrainerReport};
pub use state::{ActuationDecision, Engine, EngineCounters, Source};

use serde::{Deserialize, Serialize};

use crate::ar::{DEFAULT_ORDER, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::trace::CommandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Hold the last successful command.
    NonPredictive,
    /// Recursive AR out to the horizon, then hold.
    SinglePredictive,
    /// AR for the first missed slot, GRU block afterwards, then hold.
    Tap,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::NonPredictive, Strategy::SinglePredictive, Strategy::Tap];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::NonPredictive => "non_predictive",
            Strategy::SinglePredictive => "single_predictive",
            Strategy::Tap => "tap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModePolicy {
    /// Start in TAP mode with pre-trained weights.
    Offline,
    /// Start in single-prediction mode and switch once the GRU qualifies.
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SinglePrediction,
    Tap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// `phi`: predictors see the `phi + 1` most recent vectors.
    #[serde(default = "default_window")]
    pub window: usize,
    /// `gamma`: slots covered by the long-term block.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_order")]
    pub ar_order: usize,
    #[serde(default = "default_ridge")]
    pub ar_ridge: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_rate")]
    pub transmit_rate_hz: f64,
    #[serde(default)]
    pub bundling: bool,
    #[serde(default = "default_policy")]
    pub mode_policy: ModePolicy,
}

fn default_window() -> usize {
    16
}
fn default_horizon() -> usize {
    5
}
fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}
fn default_rate() -> f64 {
    1000.0
}
fn default_policy() -> ModePolicy {
    ModePolicy::Offline
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            horizon: default_horizon(),
            ar_order: default_order(),
            ar_ridge: default_ridge(),
            sample_rate_hz: default_rate(),
            transmit_rate_hz: default_rate(),
            bundling: false,
            mode_policy: default_policy(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEngine(m));
        if self.ar_order == 0 {
            return bad("ar_order must be >= 1".into());
        }
        let min_window = (self.ar_order + 2).max(2);
        if self.window < min_window {
            return bad(format!("window {} must be >= {min_window}", self.window));
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if !(self.ar_ridge >= 0.0 && self.ar_ridge.is_finite()) {
            return bad(format!("ar_ridge {} must be >= 0", self.ar_ridge));
        }
        compute_mu(self.sample_rate_hz, self.transmit_rate_hz)?;
        if self.sample_rate_hz < self.transmit_rate_hz {
            return bad(format!(
                "sample rate {} Hz is below transmit rate {} Hz",
                self.sample_rate_hz, self.transmit_rate_hz
            ));
        }
        Ok(())
    }

    /// Commands per packet: `ceil(f_s / f_t)` when bundling, else 1.
    pub fn mu(&self) -> usize {
        if self.bundling {
            compute_mu(self.sample_rate_hz, self.transmit_rate_hz).unwrap_or(1)
        } else {
            1
        }
    }
}

/// `ceil(f_s / f_t)`.
pub fn compute_mu(sample_rate_hz: f64, transmit_rate_hz: f64) -> Result<usize> {
    let ok = |r: f64| r > 0.0 && r.is_finite();
    if !ok(sample_rate_hz) || !ok(transmit_rate_hz) {
        return Err(Error::InvalidRate {
            sample_rate: sample_rate_hz,
            transmit_rate: transmit_rate_hz,
        });
    }
    Ok(((sample_rate_hz / transmit_rate_hz).ceil() as usize).max(1))
}

/// Packs `mu` successive commands into one payload, oldest first.
pub fn bundle(commands: &[CommandMatrix], mu: usize) -> Result<Vec<CommandMatrix>> {
    if commands.len() != mu {
        return Err(Error::BundleLength {
            expected: mu,
            found: commands.len(),
        });
    }
    if commands.windows(2).any(|w| w[1].slot != w[0].slot + 1) {
        return Err(Error::BundleGap(commands.iter().map(|c| c.slot).collect()));
    }
    Ok(commands.to_vec())
}
