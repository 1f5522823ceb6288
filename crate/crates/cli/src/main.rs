use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(egns_cli::execute(egns_cli::Cli::parse()))
}
