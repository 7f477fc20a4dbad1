use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("scheduler requires at least one edge")]
    NoEdges,

    #[error("invalid layer composition: {0}")]
    Composition(String),

    #[error("instrumentation error: {0}")]
    Instrumentation(String),

    #[error("root query on an unstable orientation")]
    UnstableOrientation,

    #[error("scaling fit failed: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed graph file: {0}")]
    GraphFile(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
