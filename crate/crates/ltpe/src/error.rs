//! Crate-wide error type.
//!
//! Numerical routines fail for a small number of structural reasons
//! (dimension mismatches, inadmissible parameters, exploding iterates);
//! everything else is a plain `io::Error` from writing reports.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear part is not dissipative: {0}")]
    NotDissipative(String),

    #[error("no admissible step size: {0}")]
    NoAdmissibleStep(String),

    #[error("step size {h} exceeds the stable maximum {h_max}; binding bound: {binding}")]
    StepTooLarge { h: f64, h_max: f64, binding: String },

    #[error("non-finite state or coefficient at step {step}")]
    StepFailure { step: usize },

    #[error("trajectory {trajectory} failed at step {step}")]
    TrajectoryFailure { trajectory: usize, step: usize },

    #[error("rate fit rejected: non-positive errors at ladder indices {indices:?}")]
    NonPositiveErrors { indices: Vec<usize> },

    #[error("empty sample set: {0}")]
    EmptySamples(String),

    #[error("incompatible grids: {0}")]
    GridMismatch(String),

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
