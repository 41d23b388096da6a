use thiserror::Error;

/// Errors raised while building or solving predictive-control problems.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unobservable at depth {depth}: observability matrix has rank {rank} < {n}")]
    Unobservable { depth: usize, rank: usize, n: usize },

    #[error("excitation not achieved: order {order} after {attempts} attempts")]
    ExcitationNotAchieved { order: usize, attempts: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate reduction: {0}")]
    DegenerateReduction(String),

    #[error("problem is not strictly convex: {0}")]
    NotStrictlyConvex(String),

    #[error("explicit domain exceeded at step {step}")]
    DomainExceeded { step: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
