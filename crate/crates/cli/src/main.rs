use std::path::PathBuf;
use std::process::ExitCode;

use adiabatic_cli::{run, Command};
use clap::Parser;

/// Measure mixing and adiabatic times of interpolated Markov chains.
#[derive(Parser, Debug)]
#[command(name = "adiabatic", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.config, &cli.out, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adiabatic: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
