use std::io;
use std::path::PathBuf;

/// Errors surfaced by file formats, configuration parsing and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },
    #[error("truncated payload: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] protoscope_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            AppError::MissingFile(path)
        } else {
            AppError::Io { path, source }
        }
    }

    /// Process exit status for this error; 2 is reserved for command-line
    /// parsing failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Io { .. } | AppError::MissingFile(_) => 3,
            AppError::BadMagic { .. }
            | AppError::UnsupportedVersion { .. }
            | AppError::Truncated { .. }
            | AppError::Malformed(_)
            | AppError::Schema(_)
            | AppError::Csv(_)
            | AppError::Json(_) => 4,
            AppError::Config { .. } => 5,
            AppError::Core(_) => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
