use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid adjacency: {0}")]
    Adjacency(String),
    #[error("index {index} out of range (size {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("measurement window unprimed: {have} of {need} samples")]
    Unprimed { have: usize, need: usize },
    #[error("matrix is rank deficient ({rank} < {cols}) in {context}")]
    RankDeficient {
        context: &'static str,
        rank: usize,
        cols: usize,
    },
    #[error("missing payload from neighbor {0}")]
    MissingPayload(usize),
    #[error("inconsistent data: no attack support of size <= {budget} explains the measurements (best residual {best_residual:e})")]
    InconsistentData { budget: usize, best_residual: f64 },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario validation failed:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
