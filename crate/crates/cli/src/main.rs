use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use pfmatch_cli::args::Cli;
use pfmatch_cli::{run, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(outcome) => {
            if let Outcome::Partial(msg) = &outcome {
                eprintln!("warning: {msg}");
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
