use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A manifest or record file line could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but violates a domain invariant.
    #[error("line {line}: invalid {field}: {message}")]
    Validation {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("infeasible scene configuration: {0}")]
    InfeasibleConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("context backend failed for sample {sample_id}: {message}")]
    Backend { sample_id: String, message: String },

    #[error("context cache corrupted: {0}")]
    CacheCorrupt(String),

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("tensor {name:?}: {message}")]
    Tensor { name: String, message: String },

    #[error("training aborted at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("run {index} failed: {source}")]
    Run {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}
