use std::path::PathBuf;

/// Errors produced by every stage of the defense toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("invalid sample '{id}': {reason}")]
    Validation { id: String, reason: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("state error: {0}")]
    State(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("purpose mismatch: expected a {expected} model, found {found}")]
    PurposeMismatch { expected: String, found: String },

    #[error("composition error: {0}")]
    Composition(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("attack failed on sample '{sample_id}': {source}")]
    Attack {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
