//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A buffer or matrix has the wrong shape for the requested operation.
    #[error("invalid dimension for {what}: expected {expected}, got {got}")]
    InvalidDimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Length is not a power of two where the transform requires one.
    #[error("transform length must be a power of two, got {0}")]
    NotPowerOfTwo(usize),

    /// Sketch/preconditioner rank exceeds the feature dimension.
    #[error("rank {rank} exceeds dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },

    /// A feature-map spec violates its own invariants.
    #[error("invalid feature map spec: {0}")]
    InvalidSpec(String),

    /// A hyperparameter is outside its admissible range.
    #[error("hyperparameter {name} invalid: {reason}")]
    InvalidHyperparam { name: &'static str, reason: String },

    /// Sequence shorter than the convolution window.
    #[error("sequence of length {length} is shorter than window {window}")]
    SequenceTooShort { length: usize, window: usize },

    /// Malformed input data (empty graph, unknown token, coincident atoms, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The randomized sketch collapsed; the preconditioner cannot be factored.
    #[error("degenerate sketch: {0}; raise the rank L or the noise lambda")]
    DegenerateSketch(String),

    /// Iterative solver produced a non-positive-definite quantity.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// Dense path refused because the problem exceeds its guard.
    #[error("{what} of size {got} exceeds the dense guard {guard}; use the iterative solver")]
    DenseGuard {
        what: &'static str,
        got: usize,
        guard: usize,
    },

    /// Grid or bound set is empty/degenerate.
    #[error("empty or degenerate search space: {0}")]
    EmptySearchSpace(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// On-disk format violation (bad magic, version mismatch, truncation).
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn format(path: impl std::fmt::Display, reason: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.to_string(),
            reason: reason.to_string(),
        }
    }
}
