use thiserror::Error;

use crate::estimator::RestrictedFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// Indices are zero-based; messages print them one-based.
    #[error("no observations for indicator {} in group {}", .indicator + 1, .group + 1)]
    EmptyCell { indicator: usize, group: usize },

    #[error("reference group {} has an all-zero indicator mean vector", .group + 1)]
    DegenerateInitialization { group: usize },

    #[error("every indicator mean is zero in every group")]
    AllMeansZero,

    #[error("beta update for group {} has a zero denominator", .group + 1)]
    ZeroBetaDenominator { group: usize },

    #[error("alpha update for indicator {} has a zero denominator", .indicator + 1)]
    ZeroAlphaDenominator { indicator: usize },

    #[error("restricted fit did not converge after {} iterations", .fit.iterations)]
    NotConverged { fit: Box<RestrictedFit> },

    #[error("saturated model has zero residual variance but the restricted model does not")]
    ZeroFullVariance,

    #[error("at least 2 groups are required for testing, found {0}")]
    InsufficientGroups(usize),

    #[error("at least 2 indicators are required for testing, found {0}")]
    InsufficientIndicators(usize),

    #[error("dataset carries no strata")]
    MissingStrata,

    #[error("stratum {label:?} cannot be tested: {reason}")]
    StratumTooSmall { label: String, reason: String },

    #[error("reference indicator {} has a near-zero alpha", .indicator + 1)]
    ZeroReference { indicator: usize },

    #[error("invalid reliability vector: {0}")]
    InvalidReliability(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerical procedures rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotConverged { .. }
            | Error::ZeroFullVariance
            | Error::ZeroBetaDenominator { .. }
            | Error::ZeroAlphaDenominator { .. }
            | Error::DegenerateInitialization { .. }
            | Error::AllMeansZero
            | Error::ZeroReference { .. } => true,
            Error::Replicate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
