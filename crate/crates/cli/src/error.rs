use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown figure '{0}' (expected one of {1})")]
    UnknownFigure(String, String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("bad manifest {}: {reason}", path.display())]
    BadManifest { path: PathBuf, reason: String },
    #[error("malformed artifact {}: {reason}", path.display())]
    BadArtifact { path: PathBuf, reason: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn bad_artifact(path: &Path, reason: impl Into<String>) -> Self {
        CliError::BadArtifact {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// 2 configuration, 3 I/O, 4 incomplete or corrupted dataset, 1 other.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::UnknownFigure(..) => 2,
            CliError::Io { .. } => 3,
            CliError::MissingArtifact(_) | CliError::BadManifest { .. } | CliError::BadArtifact { .. } => 4,
            CliError::Run(_) => 1,
        }
    }
}

macro_rules! run_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Run(e.to_string())
            }
        })*
    };
}

run_error!(
    pmtrap_core::optics::OpticsError,
    pmtrap_core::trap::TrapError,
    pmtrap_core::langevin::LangevinError,
    pmtrap_core::emitter::EmitterError,
    pmtrap_core::analysis::AnalysisError,
    pmtrap_core::reproduce::ReproduceError
);
