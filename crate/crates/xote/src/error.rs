//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The variants mirror the failure classes of the public operations:
/// `Config` for shape/parameter mismatches, `Numeric` for non-finite values
/// or non-converging iterations, `Format` for malformed files, `Data` for
/// semantically invalid corpus content, `Alignment` for span/token boundary
/// mismatches and `Contract` for violated call preconditions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag for the error class, used by the CLI's
    /// JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::Format(_) => "format",
            Error::Data(_) => "data",
            Error::Alignment(_) => "alignment",
            Error::Contract(_) => "contract",
            Error::Io(_) => "io",
        }
    }
}
