//! Command-line front end: run configuration, result cache, region scans
//! and the subcommand implementations behind the `lel` binary.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod scan;

pub use cache::{Artifact, Cache};
pub use commands::{Command, Lab, Outcome, SolveInit};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
pub use scan::{ScanResult, ScanWindow};
