use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller combined incompatible arguments (e.g. mismatched signatures).
    #[error("usage error: {0}")]
    Usage(String),
    /// A value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A geometric precondition (tangency, non-degeneracy) failed.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// Parameters violate the feasibility restrictions of the profile equation.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    /// A numerical certificate exceeded its tolerance.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
