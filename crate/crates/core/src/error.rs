//! Crate-wide error type.

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no generated tokens")]
    NoTokens,

    #[error("invalid log-probability {0}")]
    InvalidLogProb(f64),

    #[error("invalid interval [{start}, {end})")]
    InvalidInterval { start: u64, end: u64 },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("prompt template error: {0}")]
    Prompt(String),

    /// Transport-level backend failure (connection, timeout, 5xx). Retried by
    /// the HTTP client before being surfaced.
    #[error("transport error: {0}")]
    Transport(String),

    /// The backend answered but violated its declared contract.
    #[error("backend protocol error: {0}")]
    Protocol(String),

    /// Non-retriable HTTP status (4xx).
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("scripted backend has no more {0} replies")]
    ScriptExhausted(&'static str),

    #[error("frame {index}: {message}")]
    Frame { index: u64, message: String },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("synthetic world error: {0}")]
    World(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether a failed backend call may be retried.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
