use std::path::PathBuf;

use crate::query::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("knowledge base at {0} has no .txt, .md or .csv files")]
    EmptyKnowledgeBase(PathBuf),

    #[error("source {0} is empty")]
    EmptySource(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("provider error (status {status:?}): {message}")]
    Provider {
        status: Option<u16>,
        message: String,
    },

    #[error("ingest aborted after {committed} chunks were committed: {reason}")]
    IngestAborted { committed: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("table load error at row {row}: {message}")]
    TableLoad { row: usize, message: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("extraction response could not be parsed: {0}")]
    ExtractionParse(String),

    #[error("no retrieval query can be composed from an empty extracted state")]
    NoQuery,

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("session {0} already exists")]
    DuplicateSession(String),

    #[error("session {0} is finished")]
    SessionFinished(String),

    #[error("tick at {now_ms} ms is early; next tick is due at {due_ms} ms")]
    TickTooEarly { now_ms: u64, due_ms: u64 },

    #[error("script validation failed at turn {turn}: {message}")]
    ScriptValidation { turn: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn provider(status: Option<u16>, message: impl Into<String>) -> Self {
        Error::Provider {
            status,
            message: message.into(),
        }
    }
}
