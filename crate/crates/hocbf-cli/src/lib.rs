//! Library side of the runner binary: config loading, scenario bridging,
//! artifact emission, and the subcommand implementations. Kept as a library
//! so the end-to-end tests can reuse the CSV and manifest code paths.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod scenario;
