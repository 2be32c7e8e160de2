use thiserror::Error;

/// Every way the CLI can fail, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("planning failed: {0}")]
    Plan(String),
    #[error("run {run_id} failed: {reason}")]
    FailedGeneration { run_id: String, reason: String },
    #[error("evaluation data is inconsistent: {0}")]
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Plan(_) => 3,
            CliError::FailedGeneration { .. } => 4,
            CliError::Integrity(_) => 5,
        }
    }
}

pub fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}
