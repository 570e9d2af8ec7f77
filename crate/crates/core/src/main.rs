use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    pairmatch::cli::run(pairmatch::cli::Cli::parse())
}
