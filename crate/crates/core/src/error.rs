use thiserror::Error;

/// Errors produced across the reward-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("unsupported augmentation mode: {0}")]
    UnsupportedMode(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    TrainingFailure { epoch: usize },

    #[error("training failed for seed {seed}, budget {budget}: {source}")]
    RunFailure {
        seed: u64,
        budget: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("language-model service unavailable after {attempts} attempt(s): {detail}")]
    ServiceUnavailable { attempts: usize, detail: String },

    #[error("language-model response violates protocol: {detail} (body: {raw})")]
    ParseProtocol { detail: String, raw: String },

    #[error("ingestion error at line {line}: {detail}")]
    Ingestion { line: usize, detail: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("validation failed, missing or invalid: {}", .missing.join(", "))]
    Validation { missing: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
