use serde::{Deserialize, Serialize};

use super::TraceDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Per-dimension min-max scaling to `[0, 1]`, fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl NormalizationSpec {
    pub fn fit(train: &TraceDataset) -> Self {
        Self::fit_rows(train.samples())
    }

    pub fn fit_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (d, &v) in row.iter().enumerate() {
                min[d] = min[d].min(v);
                max[d] = max[d].max(v);
            }
        }
        let degenerate = min.iter().zip(&max).map(|(lo, hi)| lo == hi).collect();
        Self { min, max, degenerate }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn apply(&self, x: &[f64], direction: Direction) -> Result<Vec<f64>> {
        match direction {
            Direction::Forward => self.forward(x),
            Direction::Inverse => self.inverse(x),
        }
    }

    /// `(x - min) / (max - min)` clamped to `[0, 1]`; constant dimensions map to 0.5.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(d, &v)| {
                if self.degenerate[d] {
                    0.5
                } else {
                    ((v - self.min[d]) / (self.max[d] - self.min[d])).clamp(0.0, 1.0)
                }
            })
            .collect())
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        Ok(y.iter()
            .enumerate()
            .map(|(d, &v)| {
                if self.degenerate[d] {
                    self.min[d]
                } else {
                    self.min[d] + v * (self.max[d] - self.min[d])
                }
            })
            .collect())
    }

    /// Forward-scales every row of a dataset.
    pub fn transform(&self, data: &TraceDataset) -> Result<Vec<Vec<f64>>> {
        data.samples().iter().map(|r| self.forward(r)).collect()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}
