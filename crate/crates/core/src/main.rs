use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftwave::cli;

/// Forced waves in time-periodic shifting environments.
#[derive(Parser)]
#[command(name = "shiftwave", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List environment, experiment and initial-data kinds.
    ListKinds,
}

// Exit codes: 0 ok, 1 run failure, 2 bad config, 3 a configured check failed.
fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::ListKinds => {
            print!("{}", cli::list_kinds());
            return ExitCode::SUCCESS;
        }
        Command::Validate { config } => cli::load_config(&config).map(|cfg| {
            println!("{}", cli::describe(&cfg));
            0
        }),
        Command::Run { config } => cli::load_config(&config).and_then(|cfg| cli::run_experiment(&cfg)).map(|s| {
            print!("{}", s.report);
            if s.checks_passed {
                0
            } else {
                3
            }
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
