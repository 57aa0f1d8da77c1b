use rayon::prelude::*;

use super::buffer::TrainingSample;
use super::network::{matvec_t_acc, outer_acc, CellScratch, GruNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub(crate) struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    /// Post-activation `[r; z; n]`.
    pub gates: Vec<f64>,
}

struct Unrolled {
    cells: Vec<Vec<CellCache>>,
    /// Top-layer hidden state at each prediction step.
    tops: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

fn unroll(net: &GruNetwork, window: &[Vec<f64>], horizon: usize) -> Unrolled {
    let shape = net.shape();
    let layers = shape.layers;
    let steps = window.len() + horizon - 1;
    let mut state = vec![vec![0.0; shape.hidden]; layers];
    let mut scratch = CellScratch::new(shape.hidden);
    let mut cells = Vec::with_capacity(steps);
    let mut tops = Vec::with_capacity(horizon);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(horizon);

    for s in 0..steps {
        let x: Vec<f64> = if s < window.len() {
            window[s].clone()
        } else {
            outputs.last().cloned().expect("decode input")
        };
        let mut step_cells = vec![CellCache::default(); layers];
        for l in 0..layers {
            let (below, rest) = state.split_at_mut(l);
            let input: &[f64] = if l == 0 { &x } else { &below[l - 1] };
            net.cell(l, input, &mut rest[0], &mut scratch, Some(&mut step_cells[l]));
        }
        cells.push(step_cells);
        if s + 1 >= window.len() {
            let top = state[layers - 1].clone();
            outputs.push(net.output(&top));
            tops.push(top);
        }
    }
    Unrolled {
        cells,
        tops,
        outputs,
    }
}

/// Mean squared error over steps and dimensions for one sample, with its
/// gradient scaled by `scale` and accumulated into `grad`.
fn sample_backward(net: &GruNetwork, sample: &TrainingSample, scale: f64, grad: &mut [f64]) -> f64 {
    let shape = net.shape();
    let (hd, layers, d) = (shape.hidden, shape.layers, shape.input_dim);
    let window_len = sample.input.len();
    let horizon = sample.label.len();
    let u = unroll(net, &sample.input, horizon);
    let steps = u.cells.len();
    let params = net.params();
    let (ow, ob) = net.output_offsets();

    let mut sq = 0.0;
    let mut dh = vec![vec![0.0; hd]; layers];
    let mut feedback = vec![0.0; d];
    let mut dh_prev = vec![0.0; hd];
    let mut da = vec![0.0; 3 * hd];
    let mut d_rh = vec![0.0; hd];

    for s in (0..steps).rev() {
        if s + 1 >= window_len {
            let k = s + 1 - window_len;
            let y = &u.outputs[k];
            let label = &sample.label[k];
            let mut dz_out = vec![0.0; d];
            for i in 0..d {
                let e = y[i] - label[i];
                sq += e * e;
                let mut dy = 2.0 * e * scale;
                if s + 1 < steps {
                    dy += feedback[i];
                }
                dz_out[i] = dy * y[i] * (1.0 - y[i]);
            }
            outer_acc(&mut grad[ow..ow + d * hd], &dz_out, &u.tops[k]);
            for i in 0..d {
                grad[ob + i] += dz_out[i];
            }
            matvec_t_acc(&mut dh[layers - 1], &params[ow..ow + d * hd], &dz_out);
        }

        for l in (0..layers).rev() {
            let c = &u.cells[s][l];
            let lo = net.layer(l);
            let (r, rest) = c.gates.split_at(hd);
            let (z, n) = rest.split_at(hd);
            let hp = &c.h_prev;
            let dhl = &dh[l];

            for i in 0..hd {
                let dn = dhl[i] * (1.0 - z[i]);
                let dz = dhl[i] * (hp[i] - n[i]);
                dh_prev[i] = dhl[i] * z[i];
                da[2 * hd + i] = dn * (1.0 - n[i] * n[i]);
                da[hd + i] = dz * z[i] * (1.0 - z[i]);
            }
            let un = lo.recurrent + 2 * hd * hd;
            // candidate path through r * h
            let rh: Vec<f64> = (0..hd).map(|i| r[i] * hp[i]).collect();
            outer_acc(&mut grad[un..un + hd * hd], &da[2 * hd..], &rh);
            d_rh.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&mut d_rh, &params[un..un + hd * hd], &da[2 * hd..]);
            for i in 0..hd {
                dh_prev[i] += d_rh[i] * r[i];
                let dr = d_rh[i] * hp[i];
                da[i] = dr * r[i] * (1.0 - r[i]);
            }
            // r and z recurrent weights
            outer_acc(&mut grad[lo.recurrent..un], &da[..2 * hd], hp);
            matvec_t_acc(&mut dh_prev, &params[lo.recurrent..un], &da[..2 * hd]);
            // input weights and biases
            let wi = lo.input..lo.input + 3 * hd * lo.in_dim;
            outer_acc(&mut grad[wi.clone()], &da, &c.x);
            for i in 0..3 * hd {
                grad[lo.bias + i] += da[i];
            }
            let mut dx = vec![0.0; lo.in_dim];
            matvec_t_acc(&mut dx, &params[wi], &da);

            dh[l].copy_from_slice(&dh_prev);
            if l > 0 {
                for (a, b) in dh[l - 1].iter_mut().zip(&dx) {
                    *a += b;
                }
            } else if s >= window_len {
                feedback.copy_from_slice(&dx);
            }
        }
    }
    sq / (horizon * d) as f64
}

/// Mean squared error averaged over the batch, prediction steps and
/// dimensions, and its gradient with respect to every parameter.
pub fn loss_and_gradient(net: &GruNetwork, batch: &[&TrainingSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for s in batch {
        check_sample(net, s)?;
    }
    let d = net.shape().input_dim;
    let n = net.param_count();
    let per_sample: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|s| {
            let scale = 1.0 / (batch.len() * s.label.len() * d) as f64;
            let mut g = vec![0.0; n];
            let loss = sample_backward(net, s, scale, &mut g);
            (loss, g)
        })
        .collect();
    // fixed-order reduction keeps results independent of thread count
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    for (l, g) in per_sample {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss / batch.len() as f64, grad))
}

/// Forward-only version of the training loss.
pub fn batch_loss(net: &GruNetwork, batch: &[&TrainingSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        check_sample(net, s)?;
        let pred = net.forward(&s.input, s.label.len())?;
        let mut sq = 0.0;
        let mut count = 0usize;
        for (p, l) in pred.iter().zip(&s.label) {
            for (a, b) in p.iter().zip(l) {
                sq += (a - b) * (a - b);
                count += 1;
            }
        }
        total += sq / count as f64;
    }
    Ok(total / batch.len() as f64)
}

fn check_sample(net: &GruNetwork, s: &TrainingSample) -> Result<()> {
    net.check_window(&s.input)?;
    if s.label.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "label horizon",
            expected: net.shape().horizon,
            found: 0,
        });
    }
    let d = net.shape().input_dim;
    if let Some(bad) = s.label.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            context: "label",
            expected: d,
            found: bad.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::GruShape;

    fn sample(window: usize, horizon: usize, d: usize, seed: u64) -> TrainingSample {
        let v = |i: usize| ((i as f64 + seed as f64) * 0.37).sin() * 0.4 + 0.5;
        TrainingSample {
            input: (0..window).map(|t| (0..d).map(|j| v(t * d + j)).collect()).collect(),
            label: (0..horizon).map(|t| (0..d).map(|j| v(100 + t * d + j)).collect()).collect(),
        }
    }

    #[test]
    fn loss_matches_forward_only_loss() {
        let net = GruNetwork::new(GruShape::new(2, 3, 4, 4, 3), 2).unwrap();
        let samples: Vec<_> = (0..3).map(|s| sample(5, 3, 3, s)).collect();
        let refs: Vec<_> = samples.iter().collect();
        let (l, _) = loss_and_gradient(&net, &refs).unwrap();
        assert!((l - batch_loss(&net, &refs).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn zero_loss_zero_gradient_at_own_outputs() {
        let net = GruNetwork::new(GruShape::new(2, 2, 3, 3, 2), 5).unwrap();
        let mut s = sample(4, 2, 2, 1);
        s.label = net.forward(&s.input, 2).unwrap();
        let (l, g) = loss_and_gradient(&net, &[&s]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spot_check_against_differences() {
        let net = GruNetwork::new(GruShape::new(2, 2, 3, 3, 3), 8).unwrap();
        let samples: Vec<_> = (0..2).map(|s| sample(4, 3, 2, s)).collect();
        let refs: Vec<_> = samples.iter().collect();
        let (_, g) = loss_and_gradient(&net, &refs).unwrap();
        let h = 1e-5;
        for i in (0..net.param_count()).step_by(7) {
            let mut p = net.params().to_vec();
            p[i] += h;
            let up = batch_loss(&GruNetwork::from_params(*net.shape(), p.clone()).unwrap(), &refs).unwrap();
            p[i] -= 2.0 * h;
            let down = batch_loss(&GruNetwork::from_params(*net.shape(), p).unwrap(), &refs).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-6), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn empty_batch() {
        let net = GruNetwork::new(GruShape::new(1, 1, 1, 1, 1), 0).unwrap();
        assert!(matches!(loss_and_gradient(&net, &[]), Err(Error::EmptyBatch)));
    }
}
