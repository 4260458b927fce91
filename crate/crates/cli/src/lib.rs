//! Command-line front end: synthesis, prediction, monitoring, validation,
//! plot data and the benchmark table.

pub mod args;
mod bench;
mod commands;
pub mod error;
pub mod models;
mod plot;
pub mod tailfile;
mod validate;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command, Common};
pub use bench::{BenchOutput, BenchRow};
pub use error::CliError;
pub use validate::{Check, ValidationOutput, Verdict};

/// Parses `argv` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Synthesize(c) => commands::synthesize(&c),
        Command::Predict(a) => commands::predict(&a),
        Command::Monitor(c) => commands::monitor(&c),
        Command::Validate(a) => validate::validate(&a),
        Command::PlotData(a) => plot::plot_data(&a),
        Command::Bench(a) => bench::bench(&a),
    }
}
