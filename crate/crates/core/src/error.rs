use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}, key `{key}`: {message}")]
    ConfigAt { key: String, line: usize, message: String },

    #[error("existing results in {dir} were produced by a different experiment spec")]
    IncompatibleResume { dir: String },

    #[error("{what} index {index} out of range (< {bound})")]
    Range {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("shape mismatch in {segment}: expected {expected}, got {got}")]
    Shape {
        segment: String,
        expected: usize,
        got: usize,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite loss in training window {window}")]
    NonFiniteLoss { window: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the user's configuration rather than by a
    /// failed computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::ConfigAt { .. } | Error::IncompatibleResume { .. }
        )
    }

    pub fn shape(segment: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Shape {
            segment: segment.into(),
            expected,
            got,
        }
    }
}
