//! Front end for the admission-control workbench: experiment configs, the
//! five run modes and stable CSV/JSON output.

pub mod config;
pub mod error;
pub mod format;
pub mod run;

pub use config::{ExperimentConfig, Format, Mode};
pub use error::CliError;
pub use run::{execute, Invocation, Output};
