use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("wavelet window at scale {scale} and shift {shift} leaves the observed interval")]
    WindowOutOfRange { scale: f64, shift: f64 },

    #[error("segment [{start}, {end}) is too short for scale {scale}")]
    SegmentTooShort { start: f64, end: f64, scale: f64 },

    #[error("segment variance is not positive at scale index {index}")]
    NonPositiveVariance { index: usize },

    #[error("constraints admit no segmentation: {0}")]
    Infeasible(String),

    #[error("shrink margin {margin} swallows segment {segment}")]
    MarginsSwallowSegment { segment: usize, margin: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("band condition violated: {0}")]
    BandCondition(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NotPositiveDefinite(_) | Error::NonPositiveVariance { .. } | Error::Quadrature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
