//! `lgmc`: batch front end for the motion-compensation toolkit.
//!
//! Exit codes: 0 success, 1 other failure (including a failed gradient
//! check), 2 malformed input, 3 shape mismatch, 4 resource cap, 5 domain
//! error.

mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;
use lgmc_core::ErrorClass;

use args::{Cli, Command};

/// Outcome of a command that ran to completion but may report failure.
pub enum Outcome {
    Success,
    CheckFailed,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Attend(a) => commands::attend::run(a),
        Command::Warp(a) => commands::tools::warp(a),
        Command::Code(a) => commands::code::run(a),
        Command::Bench(a) => commands::bench::run(a),
        Command::Bdrate(a) => commands::tools::bdrate(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
        Command::Synthflow(a) => commands::tools::synthflow(a),
        Command::Blockmatch(a) => commands::tools::blockmatch(a),
        Command::Report(a) => commands::tools::report(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<lgmc_core::Error>())
        .map(|e| e.class());
    match class {
        Some(ErrorClass::Format) => 2,
        Some(ErrorClass::Shape) => 3,
        Some(ErrorClass::Resource) => 4,
        Some(ErrorClass::Domain) => 5,
        Some(ErrorClass::Other) | None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(err) => {
            if verbose {
                eprintln!("error: {err:?}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
