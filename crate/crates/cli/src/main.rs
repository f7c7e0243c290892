mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::Parser;

use commands::Outcome;
use config::{Cli, Command};
use dyadic_cz::Error;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Transform(a) => commands::transform(a),
        Command::Verify(a) => commands::verify(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::ClaimFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
