//! Self-checks behind the `gradcheck` and `oracle` subcommands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ar::fit_ar;
use crate::error::Result;
use crate::gru::{batch_loss, loss_and_gradient, GruNetwork, GruShape, TrainingSample};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub shape: GruShape,
    pub params: usize,
    pub max_relative_error: f64,
    pub worst_param: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

/// `|a - b| / max(|a|, |b|, 1e-6)`; the floor keeps near-zero gradients from
/// turning rounding noise into large ratios.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random samples in `[0.05, 0.95]` for `shape`.
pub fn random_samples(shape: &GruShape, count: usize, seed: u64) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vector = |rng: &mut ChaCha8Rng| (0..shape.input_dim).map(|_| rng.random_range(0.05..0.95)).collect();
    (0..count)
        .map(|_| TrainingSample {
            input: (0..=shape.window).map(|_| vector(&mut rng)).collect(),
            label: (0..shape.horizon).map(|_| vector(&mut rng)).collect(),
        })
        .collect()
}

/// Central-difference check of every weight of a seeded network of `shape`.
pub fn gradcheck(shape: GruShape, seed: u64) -> Result<GradCheck> {
    let net = GruNetwork::new(shape, seed)?;
    let samples = random_samples(&shape, 3, seed.wrapping_add(1));
    let batch: Vec<&TrainingSample> = samples.iter().collect();
    let (_, analytic) = loss_and_gradient(&net, &batch)?;
    let mut params = net.params().to_vec();
    let mut worst = (0.0, 0);
    for i in 0..params.len() {
        let keep = params[i];
        params[i] = keep + GRADCHECK_STEP;
        let up = batch_loss(&GruNetwork::from_params(shape, params.clone())?, &batch)?;
        params[i] = keep - GRADCHECK_STEP;
        let down = batch_loss(&GruNetwork::from_params(shape, params.clone())?, &batch)?;
        params[i] = keep;
        let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradCheck {
        shape,
        params: params.len(),
        max_relative_error: worst.0,
        worst_param: worst.1,
    })
}

/// The default suite: L in {1, 2}, H in {2, 4}, D in {1, 2}, phi = 3, gamma = 2.
pub fn default_gradcheck_shapes() -> Vec<GruShape> {
    let mut out = Vec::new();
    for layers in [1, 2] {
        for hidden in [2, 4] {
            for dim in [1, 2] {
                out.push(GruShape::new(layers, dim, hidden, 3, 2));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Solves a dense system by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Reference ridge fit for one dimension: builds the design matrix
/// explicitly and solves `(X^T X + ridge * I') theta = X^T y`, where `I'`
/// leaves the intercept unpenalised. Returns `[c, a_1, .., a_p]`.
pub fn reference_ar_fit(series: &[f64], order: usize, ridge: f64) -> Option<Vec<f64>> {
    let k = order + 1;
    let rows: Vec<Vec<f64>> = (order..series.len())
        .map(|t| std::iter::once(1.0).chain((1..=order).map(|j| series[t - j])).collect())
        .collect();
    let y: Vec<f64> = series[order..].to_vec();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &target) in rows.iter().zip(&y) {
        for i in 0..k {
            xty[i] += row[i] * target;
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, r) in xtx.iter_mut().enumerate().skip(1) {
        r[i] += ridge;
    }
    gauss_solve(xtx, xty)
}

/// Compares `fit_ar` with the reference solve on random windows and checks
/// exact recovery of a noiseless AR(2) process.
pub fn ar_oracle(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dim, order, n, ridge) = (5, 3, 50, 1e-6);
    let mut max_err: f64 = 0.0;
    for _ in 0..50 {
        let window: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let model = fit_ar(&window, order, ridge)?;
        for d in 0..dim {
            let column: Vec<f64> = window.iter().map(|v| v[d]).collect();
            let Some(theta) = reference_ar_fit(&column, order, ridge) else {
                max_err = f64::INFINITY;
                continue;
            };
            max_err = max_err.max((theta[0] - model.intercepts()[d]).abs());
            for j in 0..order {
                max_err = max_err.max((theta[j + 1] - model.coefficients()[d][j]).abs());
            }
        }
    }

    let (a1, a2, c) = (1.2, -0.5, 0.15);
    let mut series = vec![0.3, 0.35];
    for t in 2..60 {
        series.push(c + a1 * series[t - 1] + a2 * series[t - 2]);
    }
    let window: Vec<Vec<f64>> = series.iter().map(|&v| vec![v]).collect();
    let model = fit_ar(&window, 2, 0.0)?;
    let coef = &model.coefficients()[0];
    let recovery = [
        (coef[0] - a1).abs(),
        (coef[1] - a2).abs(),
        (model.intercepts()[0] - c).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    Ok(vec![
        OracleCheck {
            name: "ridge fit vs dense normal equations (50 windows, D=5, p=3, n=50)".into(),
            max_error: max_err,
            tolerance: 1e-9,
        },
        OracleCheck {
            name: "noiseless AR(2) recovery".into(),
            max_error: recovery,
            tolerance: 1e-8,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_solves_small_system() {
        let x = gauss_solve(vec![vec![0.0, 2.0], vec![3.0, 1.0]], vec![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(gauss_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, -1e-12) < 1e-5);
    }

    #[test]
    fn smallest_gradcheck_passes() {
        let r = gradcheck(GruShape::new(1, 1, 2, 2, 1), 4).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
