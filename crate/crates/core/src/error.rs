use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("series did not converge within {0} terms")]
    NoConvergence(usize),
    #[error("points must be strictly increasing")]
    Order,
    #[error("singular evaluation: {0}")]
    Singular(String),
    #[error("tracked point {0} has been swallowed")]
    Swallowed(usize),
    #[error("link {0}-{1} is not part of the pattern")]
    NotFound(usize, usize),
    #[error("{0}")]
    Capacity(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
