mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use config::{Cli, FileConfig, RunConfig};

/// Failure classes mapped to exit codes.
pub enum Failure {
    /// Usage, configuration, I/O or format problems.
    Usage(String),
    /// The iteration or a suite did not succeed; outputs were still written.
    Numerical(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let file = match &cli.flags.config {
        Some(path) => match FileConfig::load(path) {
            Ok(f) => f,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(1);
            }
        },
        None => FileConfig::default(),
    };
    let cfg = RunConfig::merge(cli.command, cli.flags, file);
    match commands::dispatch(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
