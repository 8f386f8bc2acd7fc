use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("config hash mismatch: {path} was written by config {found}, expected {expected}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Runtime(#[from] gapsched::Error),
}

impl CliError {
    /// 1 for validation failures, 2 for anything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }
}
