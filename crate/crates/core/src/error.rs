use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient samples: have {have}, need ≥ {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("degenerate design matrix (condition number {condition:.3e})")]
    Degenerate { condition: f64 },

    #[error("invalid sampling distribution: {0}")]
    InvalidDistribution(String),

    #[error("dual step collapsed every weight to zero; step size too large")]
    DivergentStep,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("signal is not in the projector's subspace (residual {residual:.3e})")]
    NotInSubspace { residual: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("timed out after {waited_ms} ms waiting for response to round {round}")]
    Timeout { round: usize, waited_ms: u128 },

    #[error("malformed csv {path}: {message}")]
    MalformedCsv { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("no decodable images in {0}")]
    NoImages(PathBuf),

    #[error("image {width}x{height} is smaller than patch size {patch_size}")]
    PatchTooLarge {
        width: usize,
        height: usize,
        patch_size: usize,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("learner failed: {0}")]
    Learner(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::MalformedCsv {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
