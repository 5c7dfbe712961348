//! Command-line front end: argument parsing, command dispatch, exit codes
//! and the trajectory table format.

pub mod cli;
pub mod commands;
pub mod exit;
pub mod format;
pub mod trajectory;

pub use cli::Cli;
pub use commands::run;
pub use exit::{CliError, ExitStatus};
