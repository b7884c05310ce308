//! Crate-wide error type.
//!
//! Every fallible operation in the engine funnels into [`Error`]. Variants
//! carry enough context (op name, offending shapes, parameter paths,
//! iteration counters) that a failure deep inside a training loop can be
//! reported without a debugger.

use std::fmt;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the engine.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes are incompatible for an op.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A tensor was built (or an op produced) a non-finite value.
    NonFinite { op: String },
    /// Shape/data length disagreement when constructing a tensor.
    LengthMismatch {
        expected: usize,
        actual: usize,
        shape: Vec<usize>,
    },
    /// An op needed a matrix (or other rank) and got something else.
    RankMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    /// Numerically rank-deficient input where full rank is required.
    RankDeficient { op: &'static str, detail: String },
    /// A symmetric-only routine received an asymmetric matrix.
    NotSymmetric { op: &'static str, max_asym: f64 },
    /// An iterative routine failed to converge.
    NoConvergence {
        op: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// Backward called on a non-scalar output.
    NonScalarLoss { shape: Vec<usize> },
    /// A gradient came back NaN/inf during optimisation.
    NonFiniteGrad {
        param: String,
        iteration: usize,
    },
    /// Training loss exceeded the divergence guard.
    Diverged { loss: f64, iteration: usize },
    /// A class label fell outside the model's output range.
    LabelOutOfRange { label: usize, classes: usize },
    /// Bad or inconsistent configuration.
    InvalidConfig { detail: String },
    /// A checkpoint did not match the model it was loaded into.
    CheckpointMismatch { detail: String },
    /// Plot/report input did not contain a required column.
    MissingColumn { column: String, path: String },
    /// A series to plot or aggregate was empty.
    EmptySeries { detail: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// JSON (de)serialisation failure.
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left:?} and {right:?}")
            }
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::LengthMismatch {
                expected,
                actual,
                shape,
            } => write!(
                f,
                "tensor data length {actual} does not match shape {shape:?} (expected {expected})"
            ),
            Error::RankMismatch {
                op,
                expected,
                actual,
            } => write!(f, "{op}: expected rank-{expected} tensor, got rank {actual}"),
            Error::RankDeficient { op, detail } => write!(f, "{op}: rank-deficient input ({detail})"),
            Error::NotSymmetric { op, max_asym } => {
                write!(f, "{op}: matrix is not symmetric (max asymmetry {max_asym:e})")
            }
            Error::NoConvergence {
                op,
                iterations,
                residual,
            } => write!(
                f,
                "{op}: no convergence after {iterations} iterations (residual {residual:e})"
            ),
            Error::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::NonFiniteGrad { param, iteration } => {
                write!(f, "non-finite gradient for `{param}` at iteration {iteration}")
            }
            Error::Diverged { loss, iteration } => {
                write!(f, "training diverged (loss {loss:e} at iteration {iteration})")
            }
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::InvalidConfig { detail } => write!(f, "invalid configuration: {detail}"),
            Error::CheckpointMismatch { detail } => write!(f, "checkpoint mismatch: {detail}"),
            Error::MissingColumn { column, path } => {
                write!(f, "column `{column}` not found in {path}")
            }
            Error::EmptySeries { detail } => write!(f, "empty series: {detail}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
