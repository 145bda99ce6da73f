use std::process::ExitCode;

use clap::Parser;
use moran_cli::{execute, Cli, WORKERS_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.resolve(std::env::var(WORKERS_ENV).ok()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("moran: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(cli.command, &cfg) {
        Ok(outcome) => {
            for c in &outcome.checks {
                eprintln!(
                    "{} {}: {}",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if outcome.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("moran: {e}");
            ExitCode::from(2)
        }
    }
}
