use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Check failures are never errors: they are reported as fields of
/// [`crate::verify::CheckReport`] or [`crate::solvers::DualityCertificate`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid utility spec `{spec}`: {reason}")]
    UtilitySpec { spec: String, reason: String },

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("no martingale measure exists: {0}")]
    Arbitrage(String),

    #[error("no martingale measure with finite generalized entropy: {0}")]
    NoFiniteEntropy(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("objective is unbounded: {reason}")]
    Unbounded {
        reason: String,
        /// Improving direction in strategy coordinates, when one was found.
        ray: Option<Vec<f64>>,
    },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("tree has {leaves} terminal nodes, above the limit of {limit}")]
    DimensionOverflow { leaves: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
