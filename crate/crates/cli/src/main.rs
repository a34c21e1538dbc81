use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use sketchlift_cli::{failure_line, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => {
            let _ = out.flush();
            ExitCode::SUCCESS
        }
        Err(err) => {
            let _ = out.flush();
            eprintln!("{}", failure_line(&err));
            ExitCode::FAILURE
        }
    }
}
