use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline and the theory lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed triple {0}: {1}")]
    MalformedTriple(String, &'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(&'static str),

    #[error("undefined gamma: H(Y) is zero")]
    UndefinedGamma,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("protocol error: could not parse {role} reply: {raw:?}")]
    Protocol { role: String, raw: String },

    #[error("session aborted at iteration {iteration}: {source}")]
    SessionAborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Transport failures are worth retrying; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
