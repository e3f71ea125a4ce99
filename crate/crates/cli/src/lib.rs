//! Implementation of the `mcsort` command-line tool: argument handling,
//! model/report persistence, and the subcommand drivers. The binary in
//! `main.rs` is a thin dispatcher over this crate.

pub mod args;
pub mod model_file;
pub mod report;

pub mod commands {
    pub mod evaluate;
    pub mod predict;
    pub mod train;
    pub mod ttest;
}

use mcsort::error::ErrorCategory;

/// CLI-level failure: either a core error (carrying its exit category) or a
/// plumbing problem (bad flags, unreadable files), which exits like a data
/// error.
#[derive(Debug)]
pub enum CliError {
    Core(mcsort::Error),
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Other(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<mcsort::Error> for CliError {
    fn from(e: mcsort::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(format!("malformed JSON: {e}"))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.category() {
                ErrorCategory::Data => 2,
                ErrorCategory::Infeasible => 3,
                ErrorCategory::Guard => 4,
            },
            CliError::Other(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
