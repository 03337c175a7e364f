use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad experiment configuration. `line` is 1-based; 0 when the problem
    /// is not tied to one line (a missing key).
    #[error("{}:{line}: {message}", path.display())]
    Config { path: PathBuf, line: usize, message: String },

    /// Malformed graph, dataset or metrics file.
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] fdadmm_core::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, line: usize, message: impl Into<String>) -> CliError {
        CliError::Format { path: path.to_path_buf(), line, message: message.into() }
    }

    /// Process exit status: 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Format { .. } | CliError::SchemaMismatch(_) => 2,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}
