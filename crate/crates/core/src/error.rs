use std::path::PathBuf;

/// Errors produced by the engine, tokenizer, datasets and experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("softmax row {row} is fully masked")]
    DegenerateSoftmax { row: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("failed to load {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("inconsistent model data: {0}")]
    Consistency(String),

    #[error("sequence of {len} tokens exceeds the context window of {max}")]
    ContextLength { len: usize, max: usize },

    #[error("token id {id} is outside the vocabulary of {vocab_size}")]
    TokenRange { id: u32, vocab_size: usize },

    #[error("percent difference is undefined for a zero pre-injection probability")]
    UndefinedPercent,

    #[error("value outside the domain: {0}")]
    Domain(String),

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn argument(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
