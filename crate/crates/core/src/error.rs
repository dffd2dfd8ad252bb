use std::path::PathBuf;

/// Errors produced by the routing toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cannot aggregate reference-based and reference-free scores together")]
    MixedScoreKinds,

    #[error("records missing {field}: {}", format_ids(.ids))]
    MissingField { field: &'static str, ids: Vec<String> },

    #[error("unsupported model format: {0}")]
    ModelFormat(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("model file is truncated or corrupt: {0}")]
    Truncated(String),

    #[error("sentence {index}: {source}")]
    AtSentence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scorer at {endpoint} timed out")]
    ScorerTimeout { endpoint: String },

    #[error("scorer at {endpoint}: {message}")]
    Scorer { endpoint: String, message: String },

    #[error("batch item {index}: {source}")]
    AtItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("policy {policy} requires {what}")]
    MissingContext {
        policy: &'static str,
        what: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_ids(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut out = ids
        .iter()
        .take(SHOWN)
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(" (+{} more)", ids.len() - SHOWN));
    }
    out
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
