use std::path::{Path, PathBuf};

/// Errors raised by the IO, ingestion and command layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: mmia_core::Error },
    #[error("{}: malformed sidecar: {message}", path.display())]
    Sidecar { path: PathBuf, message: String },
    #[error("{}: line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] mmia_core::Error),
    /// Bad flags or incompatible inputs detected before any work starts.
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Error::Csv { path: path.to_path_buf(), source }
    }

    /// Process exit status for this error: 2 for usage or validation
    /// problems, 1 for everything that went wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Core(e) => core_exit_code(e),
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Sidecar { .. }
            | Error::Parse { .. }
            | Error::Csv { .. } => 1,
        }
    }
}

fn core_exit_code(e: &mmia_core::Error) -> i32 {
    use mmia_core::Error as E;
    match e {
        E::Record { source, .. } => core_exit_code(source),
        E::ZeroNorm | E::NonFiniteLoss { .. } | E::Decode(_) => 1,
        _ => 2,
    }
}
