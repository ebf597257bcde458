//! Standalone checker: `st-check <file> --dialect <id>`.

use std::process::ExitCode;

use clap::Parser;
use stgen_cli::{init_logging, run, CheckArgs, Cli, Command};

#[derive(Parser)]
#[command(name = "st-check", version, about = "Compile one Structured Text file and print its diagnostics")]
struct Args {
    #[command(flatten)]
    check: CheckArgs,
}

fn main() -> ExitCode {
    init_logging();
    let args = Args::parse();
    ExitCode::from(run(Cli { command: Command::StCheck(args.check) }))
}
