//! Command-line front end: CSV ingestion, fitting, evidence, simulation and
//! self-check commands with JSON/CSV reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use config::{Cli, Command};
pub use error::CliError;

/// Runs one parsed invocation and returns its exit code.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Evidence(a) => commands::cmd_evidence(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Selfcheck(a) => commands::cmd_selfcheck(a),
    }
}
