use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantization configuration: {0}")]
    Config(String),

    #[error("fixed-point overflow: scale {0} does not fit a 31-bit mantissa")]
    FixedPointOverflow(f64),

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension { op: &'static str, expected: usize, got: usize },

    #[error("missing calibration statistics for site `{0}`")]
    MissingSite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("parse error in {path} at byte offset {offset}: {msg}")]
    Parse { path: PathBuf, offset: u64, msg: String },

    #[error("invalid genome: {0}")]
    Genome(String),

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
