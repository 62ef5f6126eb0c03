use thiserror::Error;

/// Errors raised by the estimation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The scale estimate collapsed below its floor (the response is fitted
    /// exactly or is identically zero).
    #[error("degenerate scale: sigma estimate {sigma:e} fell below floor {floor:e}")]
    DegenerateScale { sigma: f64, floor: f64 },

    /// The score projection does not reach every direction of the tested group.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// The relaxed projection failed its feasibility gate; no test is performed.
    #[error("infeasible projection: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
