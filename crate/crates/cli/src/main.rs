use std::io::Write;
use std::process::ExitCode;

use bae_cli::{run, CliError};

fn main() -> ExitCode {
    match run(std::env::args().skip(1)) {
        Ok(outcome) => {
            for line in &outcome.log {
                eprintln!("{line}");
            }
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(&outcome.stdout).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("bae: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
