use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A density has zero, negative or non-finite mass.
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    /// An iterative method stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A time-stepping scheme produced an inadmissible state.
    #[error("scheme failure: {0}")]
    SchemeFailure(String),

    /// A bridge target is not absolutely continuous w.r.t. the prior marginal.
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
