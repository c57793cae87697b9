//! Command-line front end: scenario documents, subcommands and output files.

pub mod commands;
pub mod error;
pub mod output;
pub mod schema;

pub use commands::{run, Cli, Command, Options};
pub use error::CliError;
pub use schema::{parse_scenario, scenario_hash, ScenarioDoc};
