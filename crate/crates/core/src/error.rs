use thiserror::Error;

#[derive(Debug, Error)]
pub enum MonolocError {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no zero crossing of the score found (best objective {objective:.3e})")]
    NoCrossing { objective: f64 },

    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("{failed} of {total} bootstrap replicates failed")]
    ResampleFailure { failed: usize, total: usize },

    #[error("A is numerically singular (smallest |eigenvalue| {min_abs_eigenvalue:.3e}, norm {norm:.3e})")]
    SingularA { min_abs_eigenvalue: f64, norm: f64 },

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("requested {requested} pixels but only {available} are available")]
    TooFewPixels { requested: usize, available: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MonolocError> = std::result::Result<T, E>;
