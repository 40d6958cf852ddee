use thiserror::Error;

/// Errors raised by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shift out of sampled window: {0}")]
    OutOfWindow(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solution diverged at node {node} (t = {time}): |y| = {magnitude:e}")]
    Divergence { node: i64, time: f64, magnitude: f64 },

    #[error("wrong segment kind: {0}")]
    WrongKind(String),

    #[error("contraction condition violated: 2ML^2/lambda = {factor} >= 1")]
    NotContractive { factor: f64 },

    #[error("matrix is not stable: max real part of spectrum is {max_real}")]
    NotStable { max_real: f64 },

    #[error("fine-grid data unavailable: {0}")]
    MissingFineData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
