use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing prerequisite: {what} not found at {}; run `crossmodal {hint}` first", path.display())]
    Missing { what: String, path: PathBuf, hint: String },

    #[error("provenance mismatch: {artifact} at {} was produced by a different configuration (recorded {found}, expected {expected})", path.display())]
    Provenance {
        artifact: String,
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Core(#[from] crossmodal::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Provenance { .. } => 2,
            CliError::Missing { .. } => 3,
            CliError::Core(crossmodal::Error::Divergence { .. } | crossmodal::Error::NonFinite(_)) => 4,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}
