use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("correlation matrix is numerically singular at theta = {theta:.6e} (reciprocal condition estimate {rcond:.3e})")]
    IllConditioned { theta: f64, rcond: f64 },

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("optimization did not converge: {0}")]
    NoConvergence(String),

    #[error("improper density: {0}")]
    Improper(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::RankDeficient(_)
                | Error::NoConvergence(_)
                | Error::Improper(_)
                | Error::Sampler(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
