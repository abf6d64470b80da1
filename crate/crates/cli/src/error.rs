use spn_core::SpnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Missing, unreadable or malformed input.
    #[error("{0}")]
    Input(String),

    /// A check ran and did not pass.
    #[error("{0}")]
    Failed(String),

    #[error(transparent)]
    Core(#[from] SpnError),

    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) if e.is_resource_limit() => 3,
            _ => 1,
        }
    }
}
