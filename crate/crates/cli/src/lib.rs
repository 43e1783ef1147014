//! Command-line front end: flag and config parsing, command dispatch and
//! report emission.

pub mod commands;
pub mod error;
pub mod options;
pub mod output;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use error::{CliError, CliResult};
pub use options::{Cli, Command, Options};

/// Parse `args` (program name first), run the command and return the exit status.
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
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let options = cli.options.resolve()?;
    let bytes = commands::execute(&cli.command, &options)?;
    output::emit(options.output.as_deref(), &bytes)
}
