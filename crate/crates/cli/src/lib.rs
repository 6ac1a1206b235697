//! `univec` command-line interface.
//!
//! Exit codes: 0 on success, 2 on a bad argument, 1 on any other failure.
//! Arguments are fully validated before anything is written.

mod args;
mod commands;

use std::ffi::OsString;
use std::io::{BufRead, Write};

use clap::Parser;

pub use args::{AttentionArgs, Cli, Command, EvaluateArgs, TrainArgs, TranslateArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a, stdout),
        Command::Translate(a) => commands::translate(&a, stdin, stdout),
        Command::Evaluate(a) => commands::evaluate(&a, stdout),
        Command::Attention(a) => commands::attention(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
