mod args;
mod commands;
mod config;
mod record;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input from the caller: exit 1.
    User(anyhow::Error),
    /// Anything else: exit 2.
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

pub trait UserContext<T> {
    /// Marks a failure as the caller's fault.
    fn user(self, what: impl std::fmt::Display) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> UserContext<T> for Result<T, E> {
    fn user(self, what: impl std::fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::User(e.into().context(what.to_string())))
    }
}

fn main() -> ExitCode {
    let raw: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let expanded = match config::expand_argv(raw) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&expanded.argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, &expanded) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
