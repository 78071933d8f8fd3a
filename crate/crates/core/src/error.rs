use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Malformed NPY header or unsupported layout.
    #[error("format error: {0}")]
    Format(String),
    /// Header and payload disagree.
    #[error("corrupt array: {0}")]
    Corrupt(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("attention map has no positive value")]
    EmptyAttention,
    #[error("ROI features have zero variance")]
    DegenerateFeatures,
    #[error("no component has a positive lobe inside the ROI")]
    NoViablePart,
    #[error("degenerate map: {0}")]
    DegenerateMap(String),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
