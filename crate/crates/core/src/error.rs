use std::path::PathBuf;

/// Errors produced by the crossmodal library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("integration fault: {0}")]
    Integration(String),

    #[error("invalid object spec: {0}")]
    InvalidSpec(String),

    #[error("sequence of length {len} is shorter than the window length {window}")]
    SequenceTooShort { len: usize, window: usize },

    #[error("no transferred latent for scene `{0}`")]
    MissingLatent(String),

    #[error("format version mismatch in {path}: expected {expected}, found {found}")]
    Version {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("blob `{name}` is truncated: expected {expected} bytes, found {found}")]
    Truncated {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("checksum mismatch for blob `{name}`")]
    Checksum { name: String },

    #[error("malformed manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
