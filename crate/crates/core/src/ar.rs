//! Short-term predictor: an independent order-`p` autoregression with
//! intercept per dimension, fitted by ridge-regularized least squares over
//! the recent window.
//!
//! For dimension `d` the fit minimises
//! `sum_t (x[t] - c - sum_j a_j x[t-j])^2 + ridge * |a|^2` over
//! `t = p..n-1`. The intercept is not penalised.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    order: usize,
    ridge: f64,
    window_len: usize,
    /// `coefficients[d][j-1]` multiplies `x[t-j]`.
    coefficients: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
}

impl ArModel {
    /// An unfitted model; [`ArModel::predict`] fails until [`ArModel::fit`] succeeds.
    pub fn new(order: usize, ridge: f64) -> Self {
        Self {
            order,
            ridge,
            window_len: 0,
            coefficients: Vec::new(),
            intercepts: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn is_fitted(&self) -> bool {
        self.window_len > 0
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn dim(&self) -> usize {
        self.intercepts.len()
    }

    pub fn fit(&mut self, window: &[Vec<f64>]) -> Result<()> {
        *self = fit_ar(window, self.order, self.ridge)?;
        Ok(())
    }

    /// Recursive multi-step forecast from the last `order` vectors (oldest
    /// first). Each step is clamped to `[0, 1]` and fed back as input.
    pub fn predict(&self, recent: &[Vec<f64>], steps: usize) -> Result<Vec<Vec<f64>>> {
        if !self.is_fitted() {
            return Err(Error::Unfitted);
        }
        if recent.len() != self.order {
            return Err(Error::LengthMismatch {
                expected: self.order,
                found: recent.len(),
            });
        }
        let dim = self.dim();
        if let Some(bad) = recent.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "ar predict",
                expected: dim,
                found: bad.len(),
            });
        }

        let mut lags: Vec<Vec<f64>> = recent.to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next: Vec<f64> = (0..dim)
                .map(|d| {
                    let a = &self.coefficients[d];
                    let v = self.intercepts[d]
                        + (1..=self.order)
                            .map(|j| a[j - 1] * lags[lags.len() - j][d])
                            .sum::<f64>();
                    v.clamp(0.0, 1.0)
                })
                .collect();
            lags.remove(0);
            lags.push(next.clone());
            out.push(next);
        }
        Ok(out)
    }

    /// Forecast directly from a window, using its last `order` vectors.
    pub fn predict_from_window(&self, window: &[Vec<f64>], steps: usize) -> Result<Vec<Vec<f64>>> {
        if window.len() < self.order {
            return Err(Error::LengthMismatch {
                expected: self.order,
                found: window.len(),
            });
        }
        self.predict(&window[window.len() - self.order..], steps)
    }
}

pub fn fit_ar(window: &[Vec<f64>], order: usize, ridge: f64) -> Result<ArModel> {
    let n = window.len();
    if order == 0 {
        return Err(Error::WindowTooShort {
            order,
            needed: 2,
            found: n,
        });
    }
    if n < order + 2 {
        return Err(Error::WindowTooShort {
            order,
            needed: order + 2,
            found: n,
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::NonFinite("ridge"));
    }
    let dim = window[0].len();
    for v in window {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "ar window",
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("ar window"));
        }
    }

    let k = order + 1;
    let mut coefficients = Vec::with_capacity(dim);
    let mut intercepts = Vec::with_capacity(dim);
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut features = vec![0.0; k];
    for d in 0..dim {
        gram.fill(0.0);
        rhs.fill(0.0);
        for t in order..n {
            features[0] = 1.0;
            for j in 1..=order {
                features[j] = window[t - j][d];
            }
            let y = window[t][d];
            for r in 0..k {
                rhs[r] += features[r] * y;
                for c in 0..=r {
                    gram[r * k + c] += features[r] * features[c];
                }
            }
        }
        for r in 1..k {
            gram[r * k + r] += ridge;
        }
        let theta = cholesky_solve(&mut gram, &rhs, k).ok_or(Error::Singular { dimension: d })?;
        intercepts.push(theta[0]);
        coefficients.push(theta[1..].to_vec());
    }

    Ok(ArModel {
        order,
        ridge,
        window_len: n,
        coefficients,
        intercepts,
    })
}

/// Solves `A x = b` for symmetric positive definite `A`, reading only the
/// lower triangle. `A` is overwritten with its Cholesky factor. Returns
/// `None` when a pivot is not safely positive.
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for p in 0..j {
            diag -= a[j * n + p] * a[j * n + p];
        }
        if !(diag > 1e-13 * scale) {
            return None;
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / diag;
        }
    }
    // L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        for p in 0..i {
            y[i] -= a[i * n + p] * y[p];
        }
        y[i] /= a[i * n + i];
    }
    // L^T x = y
    for i in (0..n).rev() {
        for p in i + 1..n {
            y[i] -= a[p * n + i] * y[p];
        }
        y[i] /= a[i * n + i];
    }
    Some(y)
}
