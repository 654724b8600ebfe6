use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("cannot build an index over an empty chunk set")]
    EmptyIndex,

    #[error("unknown chunk `{0}`")]
    UnknownChunk(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ranking has {available} entries, need at least {needed}")]
    RankingTooShort { available: usize, needed: usize },

    #[error("could not parse LLM response ({message}); raw response: {raw}")]
    LlmParse { message: String, raw: String },

    #[error("http request failed: {0}")]
    Http(String),

    #[error("precomputed store has no vector for key {0}")]
    StoreMiss(String),

    #[error("adapter produced a zero vector")]
    DegenerateAdapter,

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("duplicate id `{0}` within one ranking")]
    DuplicateInRanking(String),

    #[error("synonym map is missing keywords: {}", .0.join(", "))]
    MissingSynonyms(Vec<String>),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failing stage.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::MalformedRecord { .. }
        )
    }
}
