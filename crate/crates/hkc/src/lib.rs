//! Files, configuration and reports for the `hkc` command-line tool.

pub mod config;
pub mod csvio;
pub mod error;
pub mod parallel;
pub mod report;

pub use error::{CliError, Result};
