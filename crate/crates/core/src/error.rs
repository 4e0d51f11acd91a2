use thiserror::Error;

use crate::rt::IterationRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degree error: {0}")]
    Degree(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("integrability violated: curl norm {curl:e} exceeds threshold {threshold:e}")]
    Integrability { curl: f64, threshold: f64 },

    #[error("singular Jacobian at grid point {index}: |det| = {det:e}")]
    SingularJacobian { index: usize, det: f64 },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration diverged after {restarts} epsilon halvings (last ratios {ratios:?})")]
    NonConvergence {
        restarts: usize,
        ratios: Vec<f64>,
        history: Vec<IterationRecord>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
