use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: invalid UTF-8")]
    InvalidUtf8 { path: PathBuf, line: usize },

    /// A malformed input file; `line` is 1-based, 0 when the problem is not tied to a line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty corpus{}", .0.as_deref().map(|id| format!(" '{id}'")).unwrap_or_default())]
    EmptyCorpus(Option<String>),

    #[error("all {0} predicted positions are out of vocabulary; nothing to score")]
    NothingScored(usize),

    #[error("language models do not share one vocabulary")]
    VocabularyMismatch,

    #[error("language models have different orders: {0} and {1}")]
    OrderMismatch(usize, usize),

    #[error("mixture assigns zero probability at position {position}")]
    ZeroProbability { position: usize },

    #[error("invalid interpolation weights: {0}")]
    InvalidWeights(String),

    #[error("word '{word}' contains letters never seen in training: {letters}")]
    UnseenLetters { word: String, letters: String },

    #[error("no pronunciation can cover '{0}' with the trained graphones")]
    NoPronunciation(String),

    #[error("phoneme inventory mismatch: {0}")]
    InventoryMismatch(String),

    #[error("invalid mapping table: {0}")]
    InvalidMapping(String),

    #[error("duplicate utterance id '{0}'")]
    DuplicateId(String),

    #[error("hypothesis '{0}' has no reference")]
    MissingReference(String),

    #[error("output directory is locked by another run: {0}")]
    Locked(PathBuf),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wraps the error with the name of the step that failed.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
