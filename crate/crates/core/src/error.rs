use thiserror::Error;

/// Errors raised anywhere in the rebalancing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("loss must be scalar, got {0} elements")]
    NonScalarLoss(usize),

    #[error("group is empty")]
    EmptyGroup,

    #[error("k-means needs at least {k} points, got {points}")]
    TooFewPoints { points: usize, k: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable kind, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Ingest(_) => "ingest",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::EmptyGroup => "empty_group",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
