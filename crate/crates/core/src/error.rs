use thiserror::Error;

/// Errors produced anywhere in the inference stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("quadrature did not converge after {subdivisions} subdivisions (log estimate {log_estimate}, relative error {rel_error:e})")]
    Convergence {
        subdivisions: usize,
        log_estimate: f64,
        rel_error: f64,
    },
    #[error("root finding did not converge: {0}")]
    RootFinding(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("unbalanced data: {0}")]
    Unbalanced(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("insufficient degrees of freedom: {0}")]
    DegreesOfFreedom(String),
    #[error("optimizer failed to converge (best log-evidence {best_value})")]
    Optimizer { best_value: f64 },
    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

impl Error {
    /// True when the error reflects bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Convergence { .. } | Error::RootFinding(_) | Error::NotSpd(_) | Error::Optimizer { .. }
        )
    }
}
