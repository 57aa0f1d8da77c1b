use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruShape {
    pub layers: usize,
    pub input_dim: usize,
    pub hidden: usize,
    /// `phi`: the network consumes `phi + 1` window vectors.
    pub window: usize,
    /// `gamma`: number of predicted vectors.
    pub horizon: usize,
}

impl GruShape {
    pub fn new(layers: usize, input_dim: usize, hidden: usize, window: usize, horizon: usize) -> Self {
        Self {
            layers,
            input_dim,
            hidden,
            window,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.input_dim == 0 || self.hidden == 0 || self.horizon == 0 {
            return Err(Error::InvalidEngine(format!(
                "GRU shape needs positive layers, dims and horizon: {self:?}"
            )));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    /// Parameter blocks in storage (and weight-file) order.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let h = self.hidden;
        let mut out = Vec::with_capacity(3 * self.layers + 2);
        let mut at = 0;
        let mut push = |kind, layer, rows: usize, cols: usize, out: &mut Vec<ParamBlock>| {
            out.push(ParamBlock {
                kind,
                layer,
                rows,
                cols,
                offset: at,
            });
            at += rows * cols;
        };
        for l in 0..self.layers {
            push(BlockKind::Input, l, 3 * h, self.layer_input(l), &mut out);
            push(BlockKind::Recurrent, l, 3 * h, h, &mut out);
            push(BlockKind::Bias, l, 3 * h, 1, &mut out);
        }
        push(BlockKind::OutputWeight, self.layers, self.input_dim, h, &mut out);
        push(BlockKind::OutputBias, self.layers, self.input_dim, 1, &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.rows * b.cols).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// `[W_r; W_z; W_n]`, `3H x in`.
    Input,
    /// `[U_r; U_z; U_n]`, `3H x H`.
    Recurrent,
    /// `[b_r; b_z; b_n]`.
    Bias,
    /// `D x H`.
    OutputWeight,
    OutputBias,
}

/// One row-major array inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub kind: BlockKind,
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

/// Offsets of one layer's three blocks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    pub input: usize,
    pub recurrent: usize,
    pub bias: usize,
    pub in_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruNetwork {
    shape: GruShape,
    params: Vec<f64>,
    layer_offsets: Vec<(usize, usize, usize)>,
    out_offsets: (usize, usize),
}

impl GruNetwork {
    /// Uniform initialisation: `+-1/sqrt(fan_in)` for input weights,
    /// `+-1/sqrt(H)` for recurrent weights, biases and the output layer.
    pub fn new(shape: GruShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; shape.param_count()];
        let rec_scale = 1.0 / (shape.hidden as f64).sqrt();
        for block in shape.blocks() {
            let scale = match block.kind {
                BlockKind::Input => 1.0 / (block.cols as f64).sqrt(),
                _ => rec_scale,
            };
            for p in &mut params[block.range()] {
                *p = rng.random_range(-scale..=scale);
            }
        }
        Self::from_params(shape, params)
    }

    pub fn zeros(shape: GruShape) -> Result<Self> {
        shape.validate()?;
        Self::from_params(shape, vec![0.0; shape.param_count()])
    }

    pub fn from_params(shape: GruShape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        let expected = shape.param_count();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "GRU parameters",
                expected,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("GRU parameters"));
        }
        let blocks = shape.blocks();
        let layer_offsets = (0..shape.layers)
            .map(|l| (blocks[3 * l].offset, blocks[3 * l + 1].offset, blocks[3 * l + 2].offset))
            .collect();
        let n = blocks.len();
        let out_offsets = (blocks[n - 2].offset, blocks[n - 1].offset);
        Ok(Self {
            shape,
            params,
            layer_offsets,
            out_offsets,
        })
    }

    pub fn shape(&self) -> &GruShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn layer(&self, l: usize) -> LayerOffsets {
        let (input, recurrent, bias) = self.layer_offsets[l];
        LayerOffsets {
            input,
            recurrent,
            bias,
            in_dim: self.shape.layer_input(l),
        }
    }

    pub(crate) fn output_offsets(&self) -> (usize, usize) {
        self.out_offsets
    }

    /// Copies all weights from `other`, which must have the same shape.
    pub fn copy_from(&mut self, other: &GruNetwork) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                context: "GRU copy",
                expected: self.param_count(),
                found: other.param_count(),
            });
        }
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    pub(crate) fn check_window(&self, window: &[Vec<f64>]) -> Result<()> {
        if window.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "GRU window length",
                expected: self.shape.window + 1,
                found: 0,
            });
        }
        let d = self.shape.input_dim;
        if let Some(bad) = window.iter().find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch {
                context: "GRU input",
                expected: d,
                found: bad.len(),
            });
        }
        Ok(())
    }

    /// Runs the window through the encoder and decodes `horizon` predictions.
    pub fn forward(&self, window: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        self.check_window(window)?;
        let mut state = vec![vec![0.0; self.shape.hidden]; self.shape.layers];
        let mut scratch = CellScratch::new(self.shape.hidden);
        for x in window {
            self.step(x, &mut state, &mut scratch);
        }
        let mut out = Vec::with_capacity(horizon);
        for k in 0..horizon {
            if k > 0 {
                let prev: Vec<f64> = out.last().cloned().expect("previous prediction exists");
                self.step(&prev, &mut state, &mut scratch);
            }
            out.push(self.output(&state[self.shape.layers - 1]));
        }
        Ok(out)
    }

    fn step(&self, x: &[f64], state: &mut [Vec<f64>], scratch: &mut CellScratch) {
        for l in 0..self.shape.layers {
            let (below, rest) = state.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &below[l - 1] };
            let h = &mut rest[0];
            self.cell(l, input, h, scratch, None);
        }
    }

    /// One GRU cell update of layer `l`, in place on `h`. When `cache` is
    /// given, the intermediate activations are written there.
    pub(crate) fn cell(
        &self,
        l: usize,
        x: &[f64],
        h: &mut [f64],
        s: &mut CellScratch,
        cache: Option<&mut super::backprop::CellCache>,
    ) {
        let hd = self.shape.hidden;
        let lo = self.layer(l);
        let p = &self.params;
        let a = &mut s.pre;
        a.copy_from_slice(&p[lo.bias..lo.bias + 3 * hd]);
        matvec_acc(a, &p[lo.input..lo.input + 3 * hd * lo.in_dim], lo.in_dim, x);
        matvec_acc(&mut a[..2 * hd], &p[lo.recurrent..lo.recurrent + 2 * hd * hd], hd, h);
        for i in 0..2 * hd {
            a[i] = sigmoid(a[i]);
        }
        for i in 0..hd {
            s.rh[i] = a[i] * h[i];
        }
        let un = lo.recurrent + 2 * hd * hd;
        matvec_acc(&mut a[2 * hd..], &p[un..un + hd * hd], hd, &s.rh);
        for i in 2 * hd..3 * hd {
            a[i] = a[i].tanh();
        }
        if let Some(c) = cache {
            c.x.clear();
            c.x.extend_from_slice(x);
            c.h_prev.clear();
            c.h_prev.extend_from_slice(h);
            c.gates.clear();
            c.gates.extend_from_slice(a);
        }
        for i in 0..hd {
            let z = a[hd + i];
            let n = a[2 * hd + i];
            h[i] = (1.0 - z) * n + z * h[i];
        }
    }

    pub(crate) fn output(&self, h: &[f64]) -> Vec<f64> {
        let (w, b) = self.out_offsets;
        let d = self.shape.input_dim;
        let hd = self.shape.hidden;
        let mut y = self.params[b..b + d].to_vec();
        matvec_acc(&mut y, &self.params[w..w + d * hd], hd, h);
        y.iter_mut().for_each(|v| *v = sigmoid(*v));
        y
    }
}

pub(crate) struct CellScratch {
    pre: Vec<f64>,
    rh: Vec<f64>,
}

impl CellScratch {
    pub(crate) fn new(hidden: usize) -> Self {
        Self {
            pre: vec![0.0; 3 * hidden],
            rh: vec![0.0; hidden],
        }
    }
}

/// `out += M x` for row-major `M` with `cols` columns and `out.len()` rows.
#[inline]
pub(crate) fn matvec_acc(out: &mut [f64], m: &[f64], cols: usize, x: &[f64]) {
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += M^T g` for row-major `M` with `out.len()` columns.
#[inline]
pub(crate) fn matvec_t_acc(out: &mut [f64], m: &[f64], g: &[f64]) {
    let cols = out.len();
    for (gi, row) in g.iter().zip(m.chunks_exact(cols)) {
        axpy(out, *gi, row);
    }
}

/// `M += g x^T`.
#[inline]
pub(crate) fn outer_acc(m: &mut [f64], g: &[f64], x: &[f64]) {
    for (gi, row) in g.iter().zip(m.chunks_exact_mut(x.len())) {
        axpy(row, *gi, x);
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}
