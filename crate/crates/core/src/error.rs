use thiserror::Error;

/// Errors produced by the kinklat library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("bond {bond} is singular (w = 0); the c-ratio is undefined there")]
    SingularBond { bond: usize },

    #[error("bond {bond} has non-positive coupling w = {w}; this operation requires w > 0")]
    NonPositiveBond { bond: usize, w: f64 },

    #[error("spectral parameter required for periodic models")]
    MissingLambda,

    #[error("spectral parameter must be nonzero")]
    ZeroLambda,

    #[error("spectral parameter is only meaningful for periodic models")]
    UnexpectedLambda,

    #[error("resolvent evaluated too close to a pole (|denominator| = {denom:e})")]
    PoleProximity { denom: f64 },

    #[error("numerical blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error("eigenvalue collision at t = {time}: spectral gap {gap:e} below tolerance")]
    SpectrumCollision { time: f64, gap: f64 },

    #[error("unsupported interaction for this operation: {0}")]
    UnsupportedSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
