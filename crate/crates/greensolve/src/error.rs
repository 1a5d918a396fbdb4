use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("point outside the unit ball: {0}")]
    Domain(String),
    #[error("kernel evaluated on the diagonal; use the diagonal correction")]
    Singularity,
    #[error("unsupported regime: {0}")]
    Unsupported(String),
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no convergence after {iterations} iterations (last gap {last_gap:e})")]
    NonConvergence { iterations: usize, last_gap: f64 },
    #[error("kernel cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
