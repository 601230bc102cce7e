use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("index file is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Core(#[from] peos_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 1 for usage errors, 2 for I/O and file problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Core(peos_core::Error::InvalidParameter(_) | peos_core::Error::DimensionMismatch { .. }) => 1,
            Error::Core(peos_core::Error::Degenerate(_)) => 1,
            _ => 2,
        }
    }
}
