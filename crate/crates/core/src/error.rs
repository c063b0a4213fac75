use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// An argument is out of its documented range.
    #[error("invalid argument: {0}")]
    Arg(String),

    /// A shift configuration cannot be applied to the given tensor or model.
    #[error("invalid shift config: {0}")]
    Config(String),

    /// A weight archive does not match the model spec it is loaded into.
    #[error("load error: {0}")]
    Load(String),

    /// A query on a stream that has not consumed any frames yet.
    #[error("empty stream: {0}")]
    Empty(String),

    /// Malformed binary tensor data; `offset` is the byte position where
    /// decoding failed.
    #[error("malformed tensor data at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model spec JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
