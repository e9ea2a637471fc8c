use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum EraError {
    /// A dataset container is structurally broken (missing array, bad shape,
    /// unreadable dtype). Names the offending video and array.
    #[error("container error in video `{video}`, array `{array}`: {msg}")]
    Container {
        video: String,
        array: String,
        msg: String,
    },

    /// The container parsed but an invariant of the data model is violated.
    #[error("validation error in video `{video}`: {msg}")]
    Validation { video: String, msg: String },

    /// A precondition on an operation's arguments failed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// One or more configuration keys are invalid. Every offending key is listed.
    #[error("config error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// A loss term became non-finite during training.
    #[error("non-finite loss term `{term}` at epoch {epoch}, step {step} (video `{video}`)")]
    NonFiniteLoss {
        term: String,
        epoch: usize,
        step: usize,
        video: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("split error: {0}")]
    Split(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Hdf5(#[from] hdf5::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EraError>;

/// Shorthand for [`EraError::Container`].
pub fn container(video: impl Into<String>, array: impl Into<String>, msg: impl Into<String>) -> EraError {
    EraError::Container {
        video: video.into(),
        array: array.into(),
        msg: msg.into(),
    }
}

/// Shorthand for [`EraError::Validation`].
pub fn validation(video: impl Into<String>, msg: impl Into<String>) -> EraError {
    EraError::Validation {
        video: video.into(),
        msg: msg.into(),
    }
}
