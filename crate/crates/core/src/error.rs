use std::path::PathBuf;

use highlighter_nn::NnError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{}: {err}", path.display())]
    Wav { path: PathBuf, err: hound::Error },
    #[error("{}: unsupported audio: {detail}", path.display())]
    UnsupportedAudio { path: PathBuf, detail: String },
    #[error("{}:{line}: {detail}", path.display())]
    Parse { path: PathBuf, line: usize, detail: String },
    #[error("{0}")]
    Invalid(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("tensor `{name}` has shape {found:?}, architecture expects {expected:?}")]
    ShapeMismatch { name: String, found: Vec<usize>, expected: Vec<usize> },
    #[error("unsupported model format version {0} (expected 1)")]
    UnsupportedVersion(u64),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), err: source }
    }
}
