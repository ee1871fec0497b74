use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cogaction::cli;

#[derive(Parser)]
#[command(
    name = "cogaction",
    about = "Weighted action functionals: minimize, integrate, sweep"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads for sweeps and multistart (overrides COGACTION_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse the config and load its data files without computing.
    Validate { config: PathBuf },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::Run { config, threads } => {
            let outcome = cli::run(&config, threads);
            if outcome.status == cli::EXIT_OK {
                println!("{}", outcome.message);
            } else {
                eprintln!("error: {}", outcome.message);
            }
            ExitCode::from(outcome.status as u8)
        }
        Command::Validate { config } => match cli::validate(&config) {
            Ok((cfg, _)) => {
                println!(
                    "{}: valid {} config",
                    config.display(),
                    cfg.experiment.name()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(cli::exit_status(&e) as u8)
            }
        },
        Command::Version => {
            println!("cogaction {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
