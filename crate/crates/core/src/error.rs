use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate book id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("no label has at least {min_examples} page examples")]
    EmptyVocabulary { min_examples: usize },

    #[error("need at least {needed} characters of training text, got {got}")]
    InsufficientText { needed: usize, got: usize },

    #[error("language {lang:?}: need at least {needed} characters of sample text, got {got}")]
    InsufficientLanguageSample {
        lang: String,
        needed: usize,
        got: usize,
    },

    #[error("cannot score empty text")]
    EmptyText,

    #[error("label {term:?}: {message}")]
    Training { term: String, message: String },

    #[error("feature dimension mismatch: model has {model}, vector has {vector}")]
    DimMismatch { model: usize, vector: usize },

    #[error("candidate label {0:?} has no trained model")]
    MissingModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no usable text: none of the {sampled} sampled pages passed quality control")]
    NoUsableText { sampled: usize },

    #[error("unsupported book source: {0}")]
    UnsupportedSource(String),

    #[error("model bundle: {0}")]
    Bundle(String),

    #[error("empty test set")]
    EmptyTestSet,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
