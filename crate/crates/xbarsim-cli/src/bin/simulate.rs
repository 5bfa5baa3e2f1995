use std::process::ExitCode;

use clap::Parser;
use xbarsim_cli::run::{simulate, SimulateArgs};

fn main() -> ExitCode {
    let args = SimulateArgs::parse();
    match simulate(&args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
