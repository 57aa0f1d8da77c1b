use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column {column}: cannot parse {cell:?} as a number")]
    NonNumericCell {
        row: usize,
        column: usize,
        cell: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("packet payload is empty")]
    EmptyPayload,

    #[error("invalid packet payload: {0}")]
    InvalidPayload(String),

    #[error("channel clock must advance: slot {now} after {previous}")]
    NonMonotonicClock { previous: usize, now: usize },

    #[error("invalid channel config: {0}")]
    InvalidChannel(String),

    #[error("window of {found} vectors is too short for order {order} (need at least {needed})")]
    WindowTooShort {
        order: usize,
        needed: usize,
        found: usize,
    },

    #[error("singular normal equations in dimension {dimension}; retry with a positive ridge")]
    Singular { dimension: usize },

    #[error("model has not been fitted")]
    Unfitted,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("training batch is empty")]
    EmptyBatch,

    #[error("training loss is not finite; reduce the learning rate")]
    Divergence,

    #[error("weight file format error: {0}")]
    Format(String),

    #[error("weight file shape mismatch: {field} is {found} in file, expected {expected}")]
    ShapeMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rates must be positive (f_s = {sample_rate}, f_t = {transmit_rate})")]
    InvalidRate {
        sample_rate: f64,
        transmit_rate: f64,
    },

    #[error("bundle must hold {expected} commands, got {found}")]
    BundleLength { expected: usize, found: usize },

    #[error("bundle slots are not consecutive: {0:?}")]
    BundleGap(Vec<usize>),

    #[error("actuation already decided for slot {0}")]
    AlreadyDecided(usize),

    #[error("invalid engine config: {0}")]
    InvalidEngine(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
