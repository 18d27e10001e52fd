use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] sisr_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Image { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: sisr_core::Error },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("config {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn in_file(path: impl AsRef<Path>) -> impl FnOnce(sisr_core::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        move |source| Error::InFile { path, source }
    }

    /// Process exit status: 1 for usage and configuration problems, 2 for
    /// failures while doing the work.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) | Error::Config { .. } => 1,
            Error::Core(sisr_core::Error::Config(_)) | Error::InFile { source: sisr_core::Error::Config(_), .. } => 1,
            _ => 2,
        }
    }
}
