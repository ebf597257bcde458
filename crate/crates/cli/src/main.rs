use std::process::ExitCode;

use clap::Parser;
use stgen_cli::{init_logging, run, Cli};

fn main() -> ExitCode {
    init_logging();
    ExitCode::from(run(Cli::parse()))
}
