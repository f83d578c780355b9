use alloc::string::String;

/// Errors raised by constructors and operations of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("quadrature under-resolves a ramp: {cells_per_ramp:.2} cells per ramp, need at least 8")]
    ResolutionTooCoarse { cells_per_ramp: f64 },
    #[error("infeasible covering: {0}")]
    InfeasibleCovering(String),
    #[error("argument outside domain: {0}")]
    DomainError(String),
    #[error("support balls of levels {first} and {second} intersect")]
    PackingViolation { first: usize, second: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
