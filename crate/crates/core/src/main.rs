use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = trec::cli::Cli::parse();
    match trec::cli::run(cli, &mut std::io::stdout().lock()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
