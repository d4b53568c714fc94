use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Well-formed input that breaks a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad configuration value or incompatible arguments.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input that does not fit the operation (wrong length, non-finite entry, ...).
    #[error("input error: {0}")]
    Input(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// No labelable maneuver in a track.
    #[error("labeling error: {0}")]
    Label(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for errors caused by the caller's input or configuration rather
    /// than by a runtime or numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Config(_)
                | Error::Input(_)
                | Error::Label(_)
        )
    }
}
