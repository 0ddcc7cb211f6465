use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("infeasible diagonal: {0}")]
    Infeasible(String),

    /// Iterative solver gave up; the last iterate is kept for inspection.
    #[error("{solver} did not converge after {iterations} iterations")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
