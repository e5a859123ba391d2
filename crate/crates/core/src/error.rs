use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quadrature order {0} is invalid (need at least 2)")]
    InvalidOrder(usize),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("kernel integrates to {integral} instead of 1")]
    KernelNormalization { integral: f64 },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("right-hand side is not in the range of Id - H (weighted mean {mean:e})")]
    RangeCondition { mean: f64 },
    #[error("spectral gap {gap:e} too small to invert Id - H")]
    Conditioning { gap: f64 },
    #[error("combined operator is not a contraction (theta = {theta})")]
    Contraction { theta: f64 },
    #[error("no chain of positive kernel links from node {from} to node {to}")]
    Connectivity { from: usize, to: usize },
    #[error("{what} did not converge in {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: String,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("invalid scaling regime: {0}")]
    Regime(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("half-line truncation not certified: {0}")]
    Truncation(String),
    #[error("far-field extraction failed: {0}")]
    Extraction(String),
    #[error("time integration failed: {0}")]
    Integration(String),
    #[error("inadmissible combination: {0}")]
    Dispatch(String),
    #[error("singular linear system at pivot {0}")]
    Singular(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn convergence(what: &str, iterations: usize, history: Vec<f64>) -> Self {
        Error::Convergence {
            what: what.to_string(),
            iterations,
            residual: history.last().copied().unwrap_or(f64::NAN),
            history,
        }
    }

    /// True for failures of an iterative method (as opposed to invalid input).
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::Truncation(_)
                | Error::Extraction(_)
                | Error::Integration(_)
                | Error::Singular(_)
        )
    }
}
