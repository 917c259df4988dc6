use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the grammar-induction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{what} contains a non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward: tape has already been consumed")]
    TapeConsumed,

    #[error("sentence of length {0} cannot be derived (minimum length is 2)")]
    SentenceTooShort(usize),

    #[error("token id {id} at position {position} is outside a vocabulary of size {vocab_size}")]
    TokenOutOfRange {
        id: usize,
        position: usize,
        vocab_size: usize,
    },

    #[error("brute-force enumeration needs {needed} derivations, limit is {limit}")]
    EnumerationTooLarge { needed: u128, limit: u128 },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("model kind mismatch: {0}")]
    ModelKind(String),

    #[error("power iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("training aborted after {0} consecutive non-finite batches")]
    TrainingDiverged(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
