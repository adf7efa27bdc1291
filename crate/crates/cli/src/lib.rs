//! Command-line front end for `effect-risk`: CSV ingestion, configuration
//! and JSON/CSV reports.

pub mod commands;
pub mod config;
pub mod data;
mod error;

pub use config::{Cli, Command};
pub use error::{CliError, Result};

/// Run one parsed command and return the path of its main report.
pub fn run(cli: &Cli) -> Result<commands::Written> {
    match &cli.command {
        Command::Estimate(a) => commands::run_estimate(&config::resolve_estimate(a)?),
        Command::Bounds(a) => commands::run_bounds(&config::resolve_bounds(a)?),
        Command::Simulate(a) => commands::run_simulate(&config::resolve_simulate(a)?),
    }
}
