//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A file failed to parse against its schema.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// A selection of run records matched nothing.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    /// No ordering can be derived (fewer than two distinct attribute levels).
    #[error("ordering unavailable: {0}")]
    OrderingUnavailable(String),

    /// Generator output did not match the expected expert-line format.
    #[error("generator parse failure: {0}")]
    ParseFailure(String),

    /// An operation was invoked with its stated precondition unmet.
    #[error("precondition violation: {0}")]
    PreconditionViolation(String),

    /// Transport-level failure after exhausting retries.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The endpoint rejected the request with a non-retryable status.
    #[error("endpoint rejected request: status {status}: {message}")]
    EndpointRejection { status: u16, message: String },

    /// Paired columns had mismatched lengths.
    #[error("shape error: {0}")]
    ShapeError(String),

    /// Kendall tau is undefined (zero variance in the observed values).
    #[error("tau undefined: all observed values equal")]
    TauUndefined,

    /// A regression frame could not be built from the given records.
    #[error("frame error: {0}")]
    FrameError(String),

    /// REML optimization failed to converge.
    #[error("fit did not converge: {0}")]
    NonConverged(String),

    /// A run directory is missing cells required by the analysis.
    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
