//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading data, estimating
/// distributions, or training.
#[derive(Debug, Error)]
pub enum Error {
    /// A referenced column is missing, duplicated, or has the wrong role.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell could not be parsed or a row is malformed. Carries the
    /// 1-based data row number where the problem was found.
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    /// Input values are structurally valid but violate a contract
    /// (empty split side, class with no samples, bad config field).
    #[error("validation error: {0}")]
    Validation(String),

    /// A probability estimate has an empty class or sensitive level, so
    /// the normalized dependence matrix is undefined.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// The requested resampling target cannot be reached from the given
    /// data with the given mode.
    #[error("infeasible shift: {0}")]
    InfeasibleShift(String),

    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A gradient was requested at a point where the objective is not
    /// differentiable (zero singular value direction).
    #[error("not differentiable: {0}")]
    NotDifferentiable(String),

    /// The objective became non-finite during training.
    #[error("divergence at iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
