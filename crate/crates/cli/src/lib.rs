//! Command-line front end: configuration files in, CSV and JSON out.

pub mod config;
pub mod execute;

pub use config::{parse_config, to_config_string, ConfigError, Mode, RunConfig};
pub use execute::{execute, output_files, CliError, OutputPolicy};
