use std::io;

use thiserror::Error;

/// Errors raised across the testbed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical blow-up: non-finite state after step {step}")]
    NumericalBlowup { step: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate surrogate output: column {column} has norm {norm:e} during orthonormalization")]
    DegenerateOutput { column: usize, norm: f64 },

    #[error("bad file header: {0}")]
    Version(String),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("invalid eigenpair set: {0}")]
    Eigenpairs(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
