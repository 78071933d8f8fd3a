use std::io;
use std::path::PathBuf;

use affordmap_core::PipelineError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: {source}", path.display())]
    Array { path: PathBuf, source: affordmap_core::Error },
    #[error("{}: invalid metadata: {reason}", path.display())]
    Meta { path: PathBuf, reason: String },
    #[error("{}: shape mismatch: {reason}", path.display())]
    ShapeMismatch { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("invalid configuration: {0}")]
    Config(affordmap_core::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Core(#[from] affordmap_core::Error),
    #[error("no valid samples under {}", .0.display())]
    EmptyDataset(PathBuf),
    #[error("all {failed} samples failed to evaluate")]
    EvaluationFailed { failed: usize },
    #[error("{0}")]
    Serialize(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Bad inputs or arguments, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        use affordmap_core::Error as E;
        match self {
            Error::MissingInput(_)
            | Error::Array { .. }
            | Error::Meta { .. }
            | Error::ShapeMismatch { .. }
            | Error::Config(_)
            | Error::EmptyDataset(_) => true,
            Error::Core(e) | Error::Pipeline(PipelineError { source: e, .. }) => {
                matches!(e, E::Argument(_) | E::ShapeMismatch(_) | E::Format(_) | E::Corrupt(_))
            }
            _ => false,
        }
    }

    /// Process exit code: 2 for validation failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        if self.is_validation() {
            2
        } else {
            1
        }
    }
}
