use alloc::boxed::Box;
use alloc::string::String;

use crate::equilibrium::NeResult;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Total fleet is (numerically) zero, so the achieved distribution is undefined.
    #[error("all fleets idle: total allocation {total:e} is below the idle threshold")]
    AllFleetsIdle { total: f64 },

    /// The iteration budget ran out before the stopping rule fired. The last
    /// iterate is carried along so callers can still use it.
    #[error("equilibrium solver did not converge (residual {:e} after {} iterations)", .0.residual, .0.iterations)]
    NotConverged(Box<NeResult>),

    #[error("NE oracle failed to reach residual {tol:e} (got {residual:e})")]
    OracleNotConverged { residual: f64, tol: f64 },

    #[error("best response for follower {follower} did not converge (residual {residual:e})")]
    BestResponseNotConverged { follower: usize, residual: f64 },

    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    FactorizationFailed { jitter: f64 },

    #[error("need at least {needed} observations, have {have}")]
    InsufficientData { needed: usize, have: usize },

    #[error("theoretical beta needs a kernel with k(x, x) <= 1, got signal variance {0}")]
    KernelNotNormalized(f64),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}
