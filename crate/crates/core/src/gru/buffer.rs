use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};

/// One replay sample taken at slot `tau`: the `phi + 1` vectors ending at
/// `tau` and the `gamma` vectors after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: Vec<Vec<f64>>,
    pub label: Vec<Vec<f64>>,
}

/// Every `(W, L)` pair from a normalized series, taken every `stride` slots.
pub fn samples_from_series(
    series: &[Vec<f64>],
    window: usize,
    horizon: usize,
    stride: usize,
) -> Vec<TrainingSample> {
    let stride = stride.max(1);
    if series.len() < window + 1 + horizon {
        return Vec::new();
    }
    (window..series.len() - horizon)
        .step_by(stride)
        .map(|tau| TrainingSample {
            input: series[tau - window..=tau].to_vec(),
            label: series[tau + 1..=tau + horizon].to_vec(),
        })
        .collect()
}

/// Bounded replay buffer. The newest `validation_fraction` of the samples is
/// held out for validation; batches are drawn from the rest.
#[derive(Debug, Clone)]
pub struct TrainingBuffer {
    capacity: usize,
    window: usize,
    horizon: usize,
    dim: usize,
    validation_fraction: f64,
    samples: VecDeque<TrainingSample>,
}

impl TrainingBuffer {
    pub fn new(capacity: usize, window: usize, horizon: usize, dim: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            window,
            horizon,
            dim,
            validation_fraction: 0.1,
            samples: VecDeque::new(),
        }
    }

    pub fn with_validation_fraction(mut self, fraction: f64) -> Self {
        self.validation_fraction = fraction.clamp(0.0, 1.0);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a sample, evicting the oldest when full.
    pub fn push(&mut self, sample: TrainingSample) -> Result<()> {
        if sample.input.len() != self.window + 1 {
            return Err(Error::DimensionMismatch {
                context: "sample window",
                expected: self.window + 1,
                found: sample.input.len(),
            });
        }
        if sample.label.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                context: "sample horizon",
                expected: self.horizon,
                found: sample.label.len(),
            });
        }
        for v in sample.input.iter().chain(&sample.label) {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    context: "sample vector",
                    expected: self.dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::NonFinite("sample outside [0, 1]"));
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    fn validation_len(&self) -> usize {
        let n = self.samples.len();
        if n < 2 {
            return n;
        }
        ((n as f64 * self.validation_fraction).ceil() as usize).clamp(1, n - 1)
    }

    pub fn training_len(&self) -> usize {
        self.samples.len() - self.validation_len()
    }

    pub fn training(&self) -> impl Iterator<Item = &TrainingSample> {
        self.samples.iter().take(self.training_len())
    }

    pub fn validation(&self) -> Vec<&TrainingSample> {
        self.samples.iter().skip(self.training_len()).collect()
    }

    /// Draws `size` training samples uniformly with replacement.
    pub fn sample_batch<R: Rng>(&self, rng: &mut R, size: usize) -> Vec<&TrainingSample> {
        let n = self.training_len();
        if n == 0 {
            return Vec::new();
        }
        (0..size).map(|_| &self.samples[rng.random_range(0..n)]).collect()
    }
}
