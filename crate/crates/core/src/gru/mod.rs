//! Long-term predictor: a stacked GRU encoder–decoder with a sigmoid output
//! layer, its training machinery, and the generation/evaluation pair.
//!
//! Per layer and step, with `x` the layer input and `h` the previous hidden state:
//!
//! ```text
//! r  = sigmoid(W_r x + U_r h + b_r)
//! z  = sigmoid(W_z x + U_z h + b_z)
//! n  = tanh(W_n x + U_n (r * h) + b_n)
//! h' = (1 - z) * n + z * h
//! ```
//!
//! The window is consumed with zero initial state. The output emitted on the
//! last window vector is the first prediction; each further prediction feeds
//! the previous one back as input.

mod backprop;
mod buffer;
mod io;
mod network;
mod optim;
mod pair;

pub use backprop::{batch_loss, loss_and_gradient};
pub use buffer::{samples_from_series, TrainingBuffer, TrainingSample};
pub use io::{load_weights, load_weights_expecting, read_weights, save_weights, write_weights, WEIGHT_MAGIC, WEIGHT_VERSION};
pub use network::{GruNetwork, GruShape, ParamBlock};
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use pair::{evaluate_avg_ae, GenerationHandle, PredictorPair};

/// Global-norm threshold applied to gradients before each optimizer step.
pub const GRAD_CLIP_NORM: f64 = 5.0;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
