//! Command-line front end for `bandit-poison`: presets for the reference
//! experiments, a flat config format, tidy CSV output and the verification
//! entry point.

pub mod commands;
pub mod error;
pub mod output;
pub mod presets;
pub mod settings;

pub use commands::main_with_args;
pub use error::{CliError, CliResult};
