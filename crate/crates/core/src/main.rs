use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use simmatch::cli::{error_line, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            // A closed pipe is not a failure of the command.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(cli.command.name(), &err));
            ExitCode::FAILURE
        }
    }
}
