use std::io;
use std::path::PathBuf;

use spikegrid_core::ValidationReport;

/// Everything the command line can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration:\n{0}")]
    Invalid(ValidationReport),
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: spikegrid_core::Error,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
    #[error("{failed} acceptance check(s) failed")]
    Acceptance { failed: usize },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 success, 2 validation failure, 3 acceptance failure, 4 divergence,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use spikegrid_core::Error as E;
        match self {
            CliError::Parse(_) | CliError::Invalid(_) => 2,
            CliError::Core { source, .. } => match source {
                E::Invalid(_) => 2,
                E::Divergence { .. } | E::TrainingDivergence { .. } => 4,
                _ => 1,
            },
            CliError::Acceptance { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches run context to core errors.
pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for spikegrid_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: what(),
            source,
        })
    }
}
