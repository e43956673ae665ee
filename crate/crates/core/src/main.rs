use std::io;
use std::process::ExitCode;

use clap::Parser;
use vitriever::cli::{init_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr();
    match run(cli, &mut stdout, &mut stderr) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
