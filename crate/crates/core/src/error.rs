use thiserror::Error;

use crate::ocp::OcpRun;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no quadrature rule of degree {0} (supported: 1..=10)")]
    UnsupportedDegree(usize),

    #[error("entry ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("conditional gradient stopped after {iterations} outer iterations with gap {gap:e}")]
    MaxOuterIterations {
        iterations: usize,
        gap: f64,
        run: Box<OcpRun>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
