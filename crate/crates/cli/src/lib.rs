//! Command-line harness around `advnas-core`: TOML configuration, search
//! and sweep runners writing line-delimited logs, exact verification
//! suites, and CSV reports.

pub mod config;
pub mod logs;
pub mod report;
pub mod run;
pub mod verify;

use std::path::PathBuf;

/// Failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("run aborted: {0}")]
    Abort(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Abort(_) | CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ADVNAS_OUT_DIR";
