use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("coupling row {0} is zero")]
    NoCoupling(usize),
    #[error("stability error: {0}")]
    Stability(String),
    #[error("step-size instability: {0}")]
    StepSize(String),
    #[error("coefficient vector is not normalized (norm {0})")]
    Normalization(f64),
    #[error("coupling rows are linearly dependent (rank {rank} of {rows})")]
    DependentRows { rank: usize, rows: usize },
    #[error("a dark mode exists (rank {rank} < {modes}); the weak-coupling limit does not apply")]
    DarkModeExists { rank: usize, modes: usize },
    #[error("coupling angle of drive {0} is zero; the limit diverges")]
    Divergence(usize),
    #[error("blue-sideband dominated force noise; mode {0} is heated")]
    Heating(usize),
    #[error("quadrature not converged: {0}")]
    Resolution(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Schema(_) | Error::Precondition(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
