use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid {field}: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    /// The model does not satisfy the stability invariant.
    #[error("stability invariant violated: {detail}")]
    Unstable { detail: String },

    #[error("covariance matrix is not positive definite: eigenvalue {eigenvalue:e} at index {index} (largest {largest:e})")]
    SingularCovariance { eigenvalue: f64, index: usize, largest: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} at index {index}")]
    NotPositiveSemidefinite { eigenvalue: f64, index: usize },

    /// A reference spectrum vanishes, so the spectral ratio is unbounded.
    #[error("spectral ratio undefined: reference spectrum is {value:e} at bin {bin} (omega = {omega})")]
    RatioUndefined { bin: usize, omega: f64, value: f64 },

    /// The attack-to-output response vanishes at some frequency.
    #[error("attack spectrum unbounded: attack path response vanishes at bin {bin} (omega = {omega})")]
    UnboundedAttack { bin: usize, omega: f64 },

    #[error("monotone bracket violated while solving for {quantity}: {detail}")]
    BracketViolation { quantity: &'static str, detail: String },

    #[error("budget {budget:e} is not reachable on a grid of {n} points")]
    BudgetUnreachable { budget: f64, n: usize },

    #[error("solver for {quantity} did not converge: relative residual {residual:e}")]
    NoConvergence { quantity: &'static str, residual: f64 },

    /// A failure while processing one target of a sweep.
    #[error("target {target}: {source}")]
    AtTarget { target: f64, source: Box<Error> },

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { field, reason: reason.into() }
    }

    /// True for errors caused by bad input rather than by numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument { .. } | Error::Unstable { .. } => true,
            Error::AtTarget { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
