//! Multi-DoF command trajectories: loading, synthesis and min-max scaling.
//!
//! A trajectory is stored as a `T x D` matrix where `D = dof_count * signals_per_dof`.
//! Dimensions are DoF-major: with three signals per DoF the columns run
//! `dof0_pos, dof0_vel, dof0_acc, dof1_pos, ...`.

mod csv;
mod normalize;
mod synthetic;

pub use self::csv::{export_trace_csv, load_trace_csv};
pub use normalize::{Direction, NormalizationSpec};
pub use synthetic::{generate_synthetic, SinusoidComponent, SyntheticKind, SyntheticSpec, Waypoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate assumed for trace files, which carry no timing column.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1000.0;

/// One slot's control signal: per-DoF position (and optionally velocity and
/// acceleration), flattened DoF-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMatrix {
    pub slot: usize,
    pub values: Vec<f64>,
}

impl CommandMatrix {
    pub fn new(slot: usize, values: Vec<f64>) -> Self {
        Self { slot, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDataset {
    dof_count: usize,
    signals_per_dof: usize,
    sample_rate_hz: f64,
    samples: Vec<Vec<f64>>,
}

impl TraceDataset {
    pub fn new(
        dof_count: usize,
        signals_per_dof: usize,
        sample_rate_hz: f64,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if dof_count == 0 {
            return Err(Error::InvalidTrace("dof_count must be positive".into()));
        }
        check_signals_per_dof(signals_per_dof)?;
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidTrace(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidTrace(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        let dim = dof_count * signals_per_dof;
        for (t, row) in samples.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::RowWidth {
                    row: t + 1,
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrace(format!("non-finite value in row {}", t + 1)));
            }
        }
        Ok(Self {
            dof_count,
            signals_per_dof,
            sample_rate_hz,
            samples,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn signals_per_dof(&self) -> usize {
        self.signals_per_dof
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(Error::InvalidTrace(format!("sample rate must be positive, got {hz}")));
        }
        self.sample_rate_hz = hz;
        Ok(self)
    }

    /// Number of slots `T`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Flattened dimension `D`.
    pub fn dim(&self) -> usize {
        self.dof_count * self.signals_per_dof
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Vec<f64>> {
        self.samples
    }

    pub fn command(&self, slot: usize) -> CommandMatrix {
        CommandMatrix::new(slot, self.samples[slot].clone())
    }

    /// Indices of the position columns.
    pub fn position_dims(&self) -> Vec<usize> {
        position_dims(self.dof_count, self.signals_per_dof)
    }

    /// Splits at `floor(T * fraction)`; both halves keep at least two rows.
    pub fn split(&self, train_fraction: f64) -> Result<(TraceDataset, TraceDataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidTrace(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let cut = (self.len() as f64 * train_fraction).floor() as usize;
        let train = self.slice(0, cut)?;
        let test = self.slice(cut, self.len())?;
        Ok((train, test))
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<TraceDataset> {
        if end > self.len() || start >= end {
            return Err(Error::InvalidTrace(format!(
                "slice {start}..{end} out of range for length {}",
                self.len()
            )));
        }
        TraceDataset::new(
            self.dof_count,
            self.signals_per_dof,
            self.sample_rate_hz,
            self.samples[start..end].to_vec(),
        )
    }
}

pub fn position_dims(dof_count: usize, signals_per_dof: usize) -> Vec<usize> {
    (0..dof_count).map(|d| d * signals_per_dof).collect()
}

pub(crate) fn check_signals_per_dof(signals: usize) -> Result<()> {
    match signals {
        1 | 3 => Ok(()),
        other => Err(Error::InvalidTrace(format!(
            "signals_per_dof must be 1 or 3, got {other}"
        ))),
    }
}
