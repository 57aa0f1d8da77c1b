use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backprop::loss_and_gradient;
use super::buffer::{TrainingBuffer, TrainingSample};
use super::network::GruNetwork;
use super::optim::{clip_global_norm, Adam, AdamConfig};
use super::GRAD_CLIP_NORM;
use crate::error::{Error, Result};

/// Shared, swappable reference to the generation network. Readers take a
/// snapshot and keep using it; a store replaces the whole network at once.
#[derive(Debug, Clone)]
pub struct GenerationHandle {
    inner: Arc<RwLock<Arc<GruNetwork>>>,
}

impl GenerationHandle {
    pub fn new(net: GruNetwork) -> Self {
        Self {
            inner: Arc::new(RwLock::new(Arc::new(net))),
        }
    }

    pub fn snapshot(&self) -> Arc<GruNetwork> {
        Arc::clone(&self.inner.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn store(&self, net: GruNetwork) {
        let next = Arc::new(net);
        *self.inner.write().unwrap_or_else(|e| e.into_inner()) = next;
    }
}

/// Mean absolute error over samples, horizon steps and dimensions.
pub fn evaluate_avg_ae(net: &GruNetwork, validation: &[&TrainingSample]) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in validation {
        let pred = net.forward(&s.input, s.label.len())?;
        let mut err = 0.0;
        let mut count = 0usize;
        for (p, l) in pred.iter().zip(&s.label) {
            for (a, b) in p.iter().zip(l) {
                err += (a - b).abs();
                count += 1;
            }
        }
        total += err / count as f64;
    }
    Ok(total / validation.len() as f64)
}

/// Generation network plus its training twin.
#[derive(Debug)]
pub struct PredictorPair {
    generation: GenerationHandle,
    evaluation: GruNetwork,
    optimizer: Adam,
    generation_ae: Option<f64>,
    evaluation_ae: Option<f64>,
}

impl PredictorPair {
    pub fn new(net: GruNetwork, adam: AdamConfig) -> Self {
        let optimizer = Adam::new(adam, net.param_count());
        Self {
            generation: GenerationHandle::new(net.clone()),
            evaluation: net,
            optimizer,
            generation_ae: None,
            evaluation_ae: None,
        }
    }

    pub fn generation(&self) -> &GenerationHandle {
        &self.generation
    }

    pub fn evaluation(&self) -> &GruNetwork {
        &self.evaluation
    }

    pub fn optimizer(&self) -> &Adam {
        &self.optimizer
    }

    /// Last measured `(generation, evaluation)` validation AE.
    pub fn measured(&self) -> (Option<f64>, Option<f64>) {
        (self.generation_ae, self.evaluation_ae)
    }

    pub fn set_measured(&mut self, generation: f64, evaluation: f64) {
        self.generation_ae = Some(generation);
        self.evaluation_ae = Some(evaluation);
    }

    /// One optimizer step on the evaluation network. Returns the loss before
    /// the update.
    pub fn train_step(&mut self, batch: &[&TrainingSample]) -> Result<f64> {
        let (loss, mut grad) = loss_and_gradient(&self.evaluation, batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence);
        }
        clip_global_norm(&mut grad, GRAD_CLIP_NORM);
        self.optimizer.update(self.evaluation.params_mut(), &grad);
        Ok(loss)
    }

    /// Measures both networks on `validation` and records the results.
    pub fn evaluate(&mut self, validation: &[&TrainingSample]) -> Result<(f64, f64)> {
        let generation = evaluate_avg_ae(&self.generation.snapshot(), validation)?;
        let evaluation = evaluate_avg_ae(&self.evaluation, validation)?;
        self.set_measured(generation, evaluation);
        Ok((generation, evaluation))
    }

    /// Copies the evaluation weights into the generation network when the
    /// evaluation network measured strictly better.
    pub fn maybe_promote(&mut self) -> bool {
        match (self.generation_ae, self.evaluation_ae) {
            (Some(g), Some(e)) if e < g => {
                self.force_promote();
                true
            }
            _ => false,
        }
    }

    pub fn force_promote(&mut self) {
        self.generation.store(self.evaluation.clone());
        self.generation_ae = self.evaluation_ae;
    }

    /// Moves the pair onto a thread that runs `rounds` of `steps` training
    /// steps, evaluating and promoting after each round. The generation
    /// handle stays readable from the caller side throughout.
    pub fn train_in_background(
        mut self,
        buffer: TrainingBuffer,
        rounds: usize,
        steps: usize,
        batch_size: usize,
        seed: u64,
    ) -> JoinHandle<Result<PredictorPair>> {
        thread::spawn(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let validation = buffer.validation();
            for _ in 0..rounds {
                for _ in 0..steps {
                    let batch = buffer.sample_batch(&mut rng, batch_size);
                    self.train_step(&batch)?;
                }
                self.evaluate(&validation)?;
                self.maybe_promote();
            }
            Ok(self)
        })
    }
}
