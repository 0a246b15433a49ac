use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("no open channel at total energy {energy}")]
    NoOpenChannels { energy: f64 },

    #[error("total energy {energy} lies within {distance:e} of the threshold of level {level}")]
    ThresholdProximity { energy: f64, level: usize, distance: f64 },

    #[error("ill-conditioned scattering-matrix composition at slice {slice}")]
    IllConditionedComposition { slice: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("inputs were built from different systems: {0}")]
    SpecMismatch(String),

    #[error("distribution supports do not match")]
    SupportMismatch,

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("quadrature not converged: doubling the node count changed entries by {max_change:e} (tolerance {tolerance:e})")]
    QuadratureConvergence { max_change: f64, tolerance: f64 },

    #[error("degenerate spectrum is not supported (levels {0} and {1} coincide)")]
    UnsupportedDegeneracy(usize, usize),

    #[error("check not applicable: {0}")]
    Inapplicable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
