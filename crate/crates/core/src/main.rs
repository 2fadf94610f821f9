use std::process::ExitCode;

use clap::Parser;
use voltvar::cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(execute(&cli) as u8)
}
