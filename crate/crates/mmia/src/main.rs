use std::process::ExitCode;

use clap::Parser;
use mmia::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mmia: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
