//! The `misalign` command-line harness.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 I/O failure, 3 results
//! written but flagged (wide confidence intervals or capped episodes).

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod settings;
pub mod svg;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Outcome;
use crate::error::{CliError, CliResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FLAGGED: i32 = 3;

/// Parses `args` (including the program name), runs the command, writes its
/// outputs and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(flagged) => {
            if flagged {
                eprintln!("warning: some results are flagged; see the warning column");
                EXIT_FLAGGED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; returns whether its results were flagged.
pub fn execute(cli: &Cli) -> CliResult<bool> {
    let settings = settings::resolve(cli.command.name(), cli.command.common())?;
    let outcome = compute(&cli.command, &settings)?;
    let text = outcome
        .table
        .render(settings.format, outcome.config.clone());
    output::emit(settings.out.as_deref(), &text)?;
    if let (Some(path), Some(svg)) = (&settings.svg, &outcome.svg) {
        std::fs::write(path, svg).map_err(|e| CliError::io(path.display(), e))?;
    }
    Ok(outcome.flagged)
}

pub fn compute(command: &Command, settings: &settings::Settings) -> CliResult<Outcome> {
    match command {
        Command::Table1(_) => commands::run_table1(settings),
        Command::Figure1(_) => commands::run_figure1(settings),
        Command::Figure34(_) => commands::run_figure34(settings),
        Command::Simulate(_) => commands::run_simulate(settings),
    }
}
