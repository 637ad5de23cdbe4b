//! Library side of the `subjectdp` command: configuration parsing, run
//! orchestration, report formats and SVG rendering.

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

pub use commands::CliError;
pub use config::{ConfigError, RawConfig, RunConfig};
