use thiserror::Error;

use crate::mesh::DiscreteMap;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid metric at cell {cell}: {reason}")]
    InvalidMetric { cell: usize, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// The descent solver ran out of iterations; the last iterate is kept.
    #[error("minimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    MinimizeNotConverged {
        iterations: usize,
        grad_norm: f64,
        last_iterate: Box<DiscreteMap>,
    },

    #[error("target {index} at ({x}, {y}) lies outside the image of the map")]
    OutOfDomain { index: usize, x: f64, y: f64 },

    #[error("map is not injective: cell {cell} has non-positive orientation")]
    NotInjective { cell: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
