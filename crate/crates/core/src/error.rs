use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its documented range or shape.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a shape or value contract (e.g. mismatched widths).
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity appeared where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A value lies outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dataset-level problem, e.g. a class with no examples.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed binary or text input.
    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    /// A bounded search ran out of budget without finding what it looked for.
    #[error("search exhausted: {0}")]
    SearchExhausted(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
