use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FurbiError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Adaptive quadrature ran out of subdivisions. The best estimate and its
    /// error bound are kept so callers can decide whether to accept them.
    #[error("quadrature did not converge after {subdivisions} subdivisions (estimate {estimate:e}, error {error:e})")]
    QuadratureNonConvergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("series did not converge within {terms} terms (partial sum {partial:e})")]
    SeriesNonConvergence { partial: f64, terms: usize },

    #[error("structure enumeration would produce {count} structures, above the limit of {limit}; use a sampling-based method")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("incompatible hyper-tie structure: {0}")]
    IncompatibleStructure(String),

    #[error("unsupported model configuration: {0}")]
    Unsupported(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("tail-integral inversion failed at level {level:e}: {reason}")]
    TailInversion { level: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, FurbiError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> FurbiError {
    FurbiError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
