use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rewrite,
    Expand,
    Retrieve,
    Rerank,
    Prompt,
    Generate,
    Session,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Rewrite => "rewrite",
            Stage::Expand => "expand",
            Stage::Retrieve => "retrieve",
            Stage::Rerank => "rerank",
            Stage::Prompt => "prompt",
            Stage::Generate => "generate",
            Stage::Session => "session",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("unsupported document {path}: {reason}")]
    UnsupportedDocument { path: PathBuf, reason: String },

    #[error("malformed table in {path}: {reason}")]
    MalformedTable { path: PathBuf, reason: String },

    #[error("ragged row {line} in table {table_id} (data row {row_index}): expected {expected} cells, found {found}")]
    RaggedRow {
        table_id: String,
        row_index: usize,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("document {doc_id} is not a {expected} document")]
    WrongKind { doc_id: String, expected: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index is empty")]
    EmptyIndex,

    #[error("index is frozen; no further inserts")]
    Frozen,

    #[error("unknown chunk {0}")]
    UnknownChunk(String),

    #[error("corrupt index file: {0}")]
    Corrupt(String),

    #[error("unsupported index format version {found} (this build reads up to {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error("index version mismatch: {0}")]
    IndexVersionMismatch(String),

    #[error("{service} unavailable: {message}")]
    Upstream { service: &'static str, message: String },

    #[error("empty completion from language model")]
    EmptyCompletion,

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("unknown turn {turn_id} in session {session_id}")]
    UnknownTurn { session_id: String, turn_id: String },

    #[error("duplicate turn {turn_id} in session {session_id}")]
    DuplicateTurn { session_id: String, turn_id: String },

    #[error("malformed qrels at line {line}: {reason}")]
    MalformedQrels { line: usize, reason: String },

    #[error("query {0} has no relevance judgments")]
    MissingQrels(String),

    #[error("relevant set is empty")]
    EmptyRelevant,

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The stage this error is attributed to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn upstream(service: &'static str, err: impl fmt::Display) -> Self {
        Error::Upstream {
            service,
            message: err.to_string(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
