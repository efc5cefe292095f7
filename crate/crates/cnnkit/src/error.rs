use std::io;
use std::path::{Path, PathBuf};

/// Failures surfaced by the file formats, the pipeline and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags or arguments.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] cnnkit_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        move |source| Self::Io { path, source }
    }

    /// Process exit status: 2 usage/validation, 3 data format, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use cnnkit_core::Error as C;
        match self {
            Self::Usage(_) | Self::Core(C::InvalidArgument(_)) => 2,
            Self::Format { .. }
            | Self::Io { .. }
            | Self::Core(C::CorruptedState(_) | C::CorruptedGraph(_)) => 3,
            Self::Core(C::NumericFailure(_)) => 4,
        }
    }
}
