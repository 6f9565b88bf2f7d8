mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::error::{json_error, CliError};

fn main() -> ExitCode {
    let json_errors = std::env::args_os().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            if json_errors && !informational {
                eprintln!("{}", json_error("usage", &e.render().to_string(), code));
            } else {
                let _ = e.print();
            }
            return ExitCode::from(code as u8);
        }
    };

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            CliError::Usage(format!("could not size the thread pool: {e}")).report(cli.json_errors);
            return ExitCode::from(2);
        }
    }

    let ctx = commands::Context {
        law_store: cli.law_store,
    };
    match commands::run(cli.command, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (`| head`) is not worth a diagnostic.
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            e.report(cli.json_errors);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
