use std::path::PathBuf;

/// Error type shared across the crate.
///
/// Variants are grouped by the exit-code class the CLI maps them to:
/// validation (1), I/O and file-format problems (2), numerical failures (3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("magic mismatch in {path}: found {found:?}")]
    MagicMismatch { path: PathBuf, found: [u8; 4] },

    #[error("unsupported format version {found} in {path}")]
    UnsupportedVersion { path: PathBuf, found: u32 },

    #[error("truncated file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("dimension mismatch in {path}: expected {expected}, found {actual}")]
    DimensionMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("integrity error in {path}: {detail}")]
    Integrity { path: PathBuf, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit-code class: 1 validation, 2 I/O, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) => 1,
            Error::Io { .. }
            | Error::MissingFile(_)
            | Error::MagicMismatch { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::DimensionMismatch { .. }
            | Error::Integrity { .. } => 2,
            Error::NonFinite(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
