use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency `{name}`: {} not found (run `purikit {producer}` first)", path.display())]
    Dependency {
        name: String,
        path: PathBuf,
        producer: &'static str,
    },

    #[error("artifact error in {}: {source}", path.display())]
    Artifact {
        path: PathBuf,
        source: purikit::Error,
    },

    #[error("compute error: {0}")]
    Compute(#[from] purikit::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status for each category.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Dependency { .. } => 3,
            Self::Artifact { .. } => 4,
            Self::Compute(_) => 5,
            Self::Io(_) => 6,
        }
    }
}
