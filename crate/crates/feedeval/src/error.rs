use std::path::PathBuf;

/// Errors raised by IO, configuration, backends and the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] feedeval_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    /// Timeouts, connection failures and 5xx answers after the last attempt.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    /// A 4xx answer; never retried.
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    /// The endpoint answered but the expected field is missing or unusable.
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("ingest: {0}")]
    Ingest(String),
    #[error("generation: {0}")]
    Generation(String),
    /// Scoring failed part-way through one trait's candidates.
    #[error("selection for essay {essay_id}, {trait_id}: {message} ({scored} of {total} scores obtained)")]
    Selection {
        essay_id: String,
        trait_id: feedeval_core::model::TraitId,
        scored: usize,
        total: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether a caller may try the same request again.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
