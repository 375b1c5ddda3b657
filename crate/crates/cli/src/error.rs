//! Process-level error classification.
//!
//! Every failure funnels into one of three buckets with a stable exit code,
//! so shell scripts driving experiment grids can tell a typo from a corrupt
//! input from a numerically dead run.

use std::fmt;
use std::path::Path;

use sparseproj::io::FileError;
use sparseproj::pipeline::TrainError;

/// Exit code for malformed invocations (also what flag parsing uses).
pub const EXIT_USAGE: i32 = 2;
/// Exit code for missing or corrupt data files and shape mismatches.
pub const EXIT_DATA: i32 = 3;
/// Exit code for training runs that left the finite range.
pub const EXIT_DIVERGED: i32 = 4;

/// A command failure, bucketed by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag values or config keys the parser itself cannot catch.
    Usage(String),
    /// Unreadable, malformed, or inconsistent input data.
    Data(String),
    /// The training loss became non-finite.
    Diverged(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Diverged(_) => EXIT_DIVERGED,
        }
    }

    /// Wraps a file error with the path it happened on, so diagnostics name
    /// both the file and (for malformed content) the byte offset.
    pub fn in_file(path: &Path, err: FileError) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Diverged(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
