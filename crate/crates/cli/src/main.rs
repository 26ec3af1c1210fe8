use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    vlab::run(vlab::Cli::parse())
}
