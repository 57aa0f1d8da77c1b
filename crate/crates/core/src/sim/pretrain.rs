use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use crate::engine::{short_term_avg_ae, EngineConfig};
use crate::error::{Error, Result};
use crate::gru::{samples_from_series, AdamConfig, GruNetwork, GruShape, PredictorPair, TrainingBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub steps: usize,
    pub training_samples: usize,
    pub validation_samples: usize,
    pub final_loss: f64,
    /// Validation AE of the returned network.
    pub generation_ae: f64,
    /// Validation AE of the recursive AR forecast on the same windows.
    pub short_term_ae: f64,
}

/// Offline training on normalized series. Windows are shuffled once with the
/// training seed; the last tenth is held out for validation and promotion.
pub fn pretrain(
    series: &[Vec<Vec<f64>>],
    engine: &EngineConfig,
    training: &TrainingConfig,
    steps: usize,
) -> Result<(GruNetwork, PretrainSummary)> {
    let dim = series
        .iter()
        .find_map(|s| s.first().map(Vec::len))
        .ok_or_else(|| Error::InvalidScenario("no training data".into()))?;
    let mut samples: Vec<_> = series
        .iter()
        .flat_map(|s| samples_from_series(s, engine.window, engine.horizon, training.stride))
        .collect();
    if samples.len() < 2 {
        return Err(Error::InvalidScenario(format!(
            "training data yields {} windows; need at least 2",
            samples.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(training.seed);
    samples.shuffle(&mut rng);
    let mut buffer = TrainingBuffer::new(samples.len(), engine.window, engine.horizon, dim);
    for s in samples {
        buffer.push(s)?;
    }

    let shape = GruShape::new(training.layers, dim, training.hidden, engine.window, engine.horizon);
    let adam = AdamConfig {
        learning_rate: training.learning_rate,
        ..AdamConfig::default()
    };
    let mut pair = PredictorPair::new(GruNetwork::new(shape, training.seed)?, adam);
    let validation = buffer.validation();
    let mut final_loss = f64::NAN;
    for step in 1..=steps {
        let batch = buffer.sample_batch(&mut rng, training.batch_size);
        final_loss = pair.train_step(&batch)?;
        if step % training.eval_every == 0 || step == steps {
            pair.evaluate(&validation)?;
            pair.maybe_promote();
        }
    }
    let network = (*pair.generation().snapshot()).clone();
    let generation_ae = crate::gru::evaluate_avg_ae(&network, &validation)?;
    let summary = PretrainSummary {
        steps,
        training_samples: buffer.training_len(),
        validation_samples: validation.len(),
        final_loss,
        generation_ae,
        short_term_ae: short_term_avg_ae(&validation, engine.ar_order, engine.ar_ridge),
    };
    Ok((network, summary))
}
