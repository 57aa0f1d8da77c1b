use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Engine, EngineConfig, Mode};
use crate::ar::fit_ar;
use crate::error::Result;
use crate::gru::{AdamConfig, GenerationHandle, GruNetwork, PredictorPair, TrainingBuffer, TrainingSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// Training steps interleaved per slot.
    #[serde(default = "default_steps_per_slot")]
    pub steps_per_slot: usize,
    /// Validate (and possibly promote or switch) every this many steps.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// No switch is offered before the validation set holds this many samples.
    #[serde(default = "default_min_validation")]
    pub min_validation: usize,
    /// Consecutive validations the GRU must win before the switch.
    #[serde(default = "default_patience")]
    pub switch_patience: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps_per_slot() -> usize {
    4
}
fn default_eval_every() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_capacity() -> usize {
    4096
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_min_validation() -> usize {
    32
}
fn default_patience() -> usize {
    3
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            steps_per_slot: default_steps_per_slot(),
            eval_every: default_eval_every(),
            batch_size: default_batch(),
            buffer_capacity: default_capacity(),
            learning_rate: default_learning_rate(),
            min_validation: default_min_validation(),
            switch_patience: default_patience(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerReport {
    pub steps: u64,
    pub short_ae: f64,
    pub generation_ae: f64,
    pub evaluation_ae: f64,
    pub mode: Mode,
}

/// Mean absolute error of the recursive AR forecast over a validation set,
/// measured the same way as the GRU's. Windows whose fit fails are scored
/// as holding their last vector.
pub fn short_term_avg_ae(validation: &[&TrainingSample], order: usize, ridge: f64) -> f64 {
    if validation.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for s in validation {
        let steps = s.label.len();
        let pred = fit_ar(&s.input, order, ridge)
            .and_then(|m| m.predict_from_window(&s.input, steps))
            .unwrap_or_else(|_| vec![s.input.last().cloned().unwrap_or_default(); steps]);
        let mut err = 0.0;
        let mut count = 0usize;
        for (p, l) in pred.iter().zip(&s.label) {
            for (a, b) in p.iter().zip(l) {
                err += (a - b).abs();
                count += 1;
            }
        }
        total += err / count.max(1) as f64;
    }
    total / validation.len() as f64
}

/// Deterministic in-loop trainer for the online policy: harvests complete
/// `(W, L)` samples from the engine's history, runs a fixed number of steps
/// per slot and periodically validates, promotes and offers a mode switch.
#[derive(Debug)]
pub struct OnlineTrainer {
    config: OnlineConfig,
    pair: PredictorPair,
    buffer: TrainingBuffer,
    rng: ChaCha8Rng,
    window: usize,
    horizon: usize,
    ar_order: usize,
    ar_ridge: f64,
    next_tau: usize,
    steps: u64,
    wins: usize,
    switched_at: Option<u64>,
    reports: Vec<TrainerReport>,
}

impl OnlineTrainer {
    pub fn new(net: GruNetwork, engine: &EngineConfig, config: OnlineConfig) -> Self {
        let shape = *net.shape();
        let adam = AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        };
        Self {
            buffer: TrainingBuffer::new(config.buffer_capacity, engine.window, engine.horizon, shape.input_dim),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            pair: PredictorPair::new(net, adam),
            window: engine.window,
            horizon: engine.horizon,
            ar_order: engine.ar_order,
            ar_ridge: engine.ar_ridge,
            next_tau: engine.window,
            steps: 0,
            wins: 0,
            switched_at: None,
            reports: Vec::new(),
            config,
        }
    }

    pub fn generation(&self) -> GenerationHandle {
        self.pair.generation().clone()
    }

    pub fn pair(&self) -> &PredictorPair {
        &self.pair
    }

    pub fn buffer(&self) -> &TrainingBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Training step count at which the engine switched to TAP.
    pub fn switched_at(&self) -> Option<u64> {
        self.switched_at
    }

    pub fn reports(&self) -> &[TrainerReport] {
        &self.reports
    }

    /// Adds every newly complete sample from the engine's history.
    pub fn harvest(&mut self, engine: &Engine) -> Result<usize> {
        let history = engine.history();
        let (Some((&oldest, _)), Some((&newest, _))) = (history.first_key_value(), history.last_key_value()) else {
            return Ok(0);
        };
        if newest < self.horizon {
            return Ok(0);
        }
        let last_tau = newest - self.horizon;
        let mut added = 0;
        let start = self.next_tau.max(oldest + self.window);
        for tau in start..=last_tau {
            let slots = tau - self.window..=tau + self.horizon;
            let values: Option<Vec<Vec<f64>>> = slots.map(|s| history.get(&s).cloned()).collect();
            if let Some(mut values) = values {
                let label = values.split_off(self.window + 1);
                self.buffer.push(TrainingSample { input: values, label })?;
                added += 1;
            }
        }
        self.next_tau = self.next_tau.max(last_tau + 1);
        Ok(added)
    }

    /// Per-slot hook: harvest, train, and validate on schedule.
    pub fn on_slot(&mut self, engine: &mut Engine) -> Result<Option<TrainerReport>> {
        self.harvest(engine)?;
        if self.buffer.training_len() < self.config.batch_size.max(1) {
            return Ok(None);
        }
        let mut report = None;
        for _ in 0..self.config.steps_per_slot {
            let batch = self.buffer.sample_batch(&mut self.rng, self.config.batch_size);
            self.pair.train_step(&batch)?;
            self.steps += 1;
            if self.steps.is_multiple_of(self.config.eval_every.max(1) as u64) {
                report = Some(self.validate(engine)?);
            }
        }
        Ok(report)
    }

    /// Measures both predictors on the held-out samples and promotes the
    /// evaluation network if it is better. The engine is offered a switch
    /// once the generation network has beaten AR on `switch_patience`
    /// consecutive validations of at least `min_validation` samples.
    pub fn validate(&mut self, engine: &mut Engine) -> Result<TrainerReport> {
        let validation = self.buffer.validation();
        let short_ae = short_term_avg_ae(&validation, self.ar_order, self.ar_ridge);
        let (_, evaluation_ae) = self.pair.evaluate(&validation)?;
        self.pair.maybe_promote();
        let generation_ae = self.pair.measured().0.expect("measured above");
        self.wins = if validation.len() >= self.config.min_validation && generation_ae < short_ae {
            self.wins + 1
        } else {
            0
        };
        let mut mode = engine.mode();
        if self.wins >= self.config.switch_patience.max(1) {
            let before = mode;
            mode = engine.maybe_switch_mode(short_ae, generation_ae);
            if before != mode {
                self.switched_at = Some(self.steps);
            }
        }
        let report = TrainerReport {
            steps: self.steps,
            short_ae,
            generation_ae,
            evaluation_ae,
            mode,
        };
        self.reports.push(report);
        Ok(report)
    }
}
