use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid body model: {0}")]
    InvalidModel(String),

    #[error("invalid body parameters: {0}")]
    InvalidParams(String),

    #[error("correspondence map was not rendered from this face table")]
    FaceTableMismatch,

    #[error("body model has no vertex group named {0:?}")]
    MissingVertexGroup(String),

    #[error("rotation matrix is not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("invalid face box: {0}")]
    InvalidBox(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 3 for bad input, 4 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
