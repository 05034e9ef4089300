use thiserror::Error;

/// Errors produced by the MDP, geometry, and learning routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("value iteration hit the iteration limit ({iterations}) with residual {residual:e}")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("action gap undefined with {0} action(s)")]
    GapUndefined(usize),

    #[error("signed measure has nonzero total mass {0:e}")]
    NonZeroMass(f64),

    #[error(
        "infinite Lipschitz seminorm: states {0} and {1} are at distance 0 with different values"
    )]
    InfiniteSeminorm(usize, usize),

    #[error("no mixing certificate: gamma * kappa = {0} >= 1")]
    NoCertificate(f64),

    #[error("invalid ground metric: {0}")]
    InvalidMetric(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter {0} is not a regular point (inside a kink window or below the gap margin)")]
    NonRegular(f64),

    #[error("kink windows overlap: [{0}, {1}] and [{2}, {3}]")]
    OverlappingWindows(f64, f64, f64, f64),
}

pub type Result<T> = std::result::Result<T, Error>;
