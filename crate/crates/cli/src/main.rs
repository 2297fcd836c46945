use std::process::ExitCode;

use clap::Parser;
use tandem_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match tandem_cli::run(&cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(tandem_cli::EXIT_ERROR)
        }
    }
}
