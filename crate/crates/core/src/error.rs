use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene data: {0}")]
    Invalid(String),

    #[error("scene `{0}` has no participants")]
    EmptyScene(String),

    #[error("graph {index} (scene `{scene_id}`) has no nodes")]
    EmptyGraph { index: usize, scene_id: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("tape does not match the network it is replayed against: {0}")]
    TapeMismatch(String),

    #[error("batch of {0} scenes is too small to draw negatives")]
    BatchTooSmall(usize),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("data has zero variance in every direction")]
    DegenerateData,

    #[error("cluster count {k} outside [2, {n}]")]
    BadK { k: usize, n: usize },

    #[error("silhouette requires at least two non-empty clusters")]
    SingleCluster,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("artifact config hash {found} does not match current config {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
