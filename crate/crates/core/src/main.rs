use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match apc_platform::cli::run(apc_platform::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
