//! Error families of the runner, one per nonzero exit code: 1 for config
//! problems, 2 for runs that stop early or checks that find violations,
//! 3 for artifact I/O failures.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparseable, or invalid configuration (exit 1).
    Config(String),
    /// The run stopped before the horizon, or a verification sweep found
    /// violations (exit 2).
    Diverged(String),
    /// Artifact read/write failure (exit 3).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Diverged(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Diverged(msg) => write!(f, "run: {msg}"),
            CliError::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
