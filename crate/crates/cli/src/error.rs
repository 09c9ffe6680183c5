use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config entries or inputs; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Training blew up; outputs written so far are kept. Exit code 3.
    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },
    #[error(transparent)]
    Core(#[from] sntk_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence { .. } => 3,
            CliError::Core(sntk_core::Error::InvalidArgument(_) | sntk_core::Error::Checkpoint { .. } | sntk_core::Error::FixedPoints(_)) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}
