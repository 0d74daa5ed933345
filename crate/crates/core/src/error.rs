use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid boundary grid: {0} points (need at least 4)")]
    InvalidGrid(usize),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("shape sampling stuck: {attempts} consecutive rejections for class {class}")]
    SamplingStuck { class: String, attempts: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("missing input layout T0={t0} C0={c0} required by {model}")]
    LayoutMissing { model: String, t0: usize, c0: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dataset too small: {got} samples (need at least {min})")]
    TooSmall { got: usize, min: usize },

    #[error("invalid noise level {0}")]
    InvalidNoiseLevel(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("non-finite values produced by {0}")]
    NonFinite(String),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
