use thiserror::Error;

use crate::binning::SolverOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("partition function diverges: {0}")]
    DivergentPartitionFunction(String),

    #[error("adaptive quadrature did not reach tolerance on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64 },

    #[error("POVM is incomplete at level {level}: weights sum to 1 {deviation:+e}")]
    IncompletePovm { level: usize, deviation: f64 },

    #[error("requested {requested} bins but the spectrum has only {available} distinct levels")]
    TooManyBins { requested: usize, available: usize },

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("fixed-point iteration did not converge (residual {:e})", .0.record.best().residual)]
    NoConvergence(Box<SolverOutcome>),

    #[error("truncation at n_max = {n_max} leaves tail mass {tail_mass:e}")]
    TruncationInsufficient { n_max: usize, tail_mass: f64 },

    #[error("unsupported lattice size L = {0} (must be even and within 4..=32)")]
    UnsupportedSize(usize),

    #[error("scaling fit needs at least 3 sizes, got {0}")]
    InsufficientSizes(usize),

    #[error("probe Fisher information {probe:e} exceeds the optimal coarse-grained value {optimal:e}")]
    BoundViolation { probe: f64, optimal: f64 },

    #[error("temperature is not identifiable: {0}")]
    NonIdentifiable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpectrum(_)
                | Error::InvalidParameter(_)
                | Error::ParameterOutOfRange(_)
                | Error::TooManyBins { .. }
                | Error::InstanceTooLarge(_)
                | Error::UnsupportedSize(_)
                | Error::InsufficientSizes(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
