use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UnmixError {
    #[error("negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("bad rank {k}: need 1 <= k <= min(bands, pixels) = {max}")]
    BadRank { k: usize, max: usize },
    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel width sigma^2 must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("band weight {value} at band {band} outside (0, 1]")]
    WeightOutOfRange { band: usize, value: f64 },
    #[error("every band has zero norm; sparsity estimate undefined")]
    DegenerateBand,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("spectrum with zero norm")]
    ZeroNormSpectrum,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error in {path} at {location}: {msg}")]
    Parse {
        path: PathBuf,
        location: String,
        msg: String,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, UnmixError>;

impl UnmixError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UnmixError::Io {
            path: path.into(),
            source,
        }
    }
}
