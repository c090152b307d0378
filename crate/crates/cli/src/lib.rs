//! Command layer for the `mvlmn` binary: argument definitions, the
//! figure table, model and data file readers, and artifact writers.

pub mod args;
pub mod commands;
pub mod figures;
pub mod model_file;
pub mod output;

use std::path::PathBuf;

pub use args::Cli;
pub use commands::{run, simulate};

pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFY_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const REGIME: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug)]
pub enum CliError {
    Core(mvlmn_core::Error),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use mvlmn_core::Error as E;
        match self {
            CliError::Core(E::Regime(_)) | CliError::Core(E::UnsupportedMixing) => exit::REGIME,
            CliError::Core(E::AccuracyNotMet { .. }) => exit::VERIFY_FAILED,
            CliError::Core(_) | CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mvlmn_core::Error> for CliError {
    fn from(e: mvlmn_core::Error) -> Self {
        CliError::Core(e)
    }
}
