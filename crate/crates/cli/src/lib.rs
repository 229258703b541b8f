//! Command-line front end: reads an experiment config, runs it, and writes
//! CSV tables plus a `manifest.json` into the output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;

pub use config::{ExperimentConfig, LoadedConfig};
pub use error::CliError;
use output::{input_hashes, ArtifactDir, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    MixingTime,
    AdiabaticTime,
    GlauberRun,
    VerifyBounds,
    FitScaling,
    Trajectory,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::MixingTime => "mixing-time",
            Command::AdiabaticTime => "adiabatic-time",
            Command::GlauberRun => "glauber-run",
            Command::VerifyBounds => "verify-bounds",
            Command::FitScaling => "fit-scaling",
            Command::Trajectory => "trajectory",
        }
    }
}

/// Runs one experiment. Config errors leave nothing on disk; any other
/// failure still writes a manifest recording the error and whatever
/// partial tables were produced.
pub fn run(command: Command, config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let clock = Instant::now();
    let cfg = LoadedConfig::read(config)?;
    let seed = seed.or(cfg.config.seed).unwrap_or(0);
    let mut dir = ArtifactDir::new(out);
    let result = match command {
        Command::MixingTime => commands::mixing(&cfg, &mut dir),
        Command::AdiabaticTime => commands::adiabatic(&cfg, &mut dir),
        Command::GlauberRun => commands::glauber(&cfg, seed, &mut dir),
        Command::VerifyBounds => commands::bounds(&cfg, &mut dir),
        Command::FitScaling => commands::fit(&cfg, &mut dir),
        Command::Trajectory => commands::trajectory(&cfg, &mut dir),
    };
    if let Err(CliError::Config(_)) = &result {
        return result;
    }
    let status = match &result {
        Ok(()) => "ok",
        Err(CliError::Domain(adiabatic::Error::SearchTimeout { .. })) => "partial",
        Err(_) => "failed",
    };
    let manifest = RunManifest {
        command: command.name().to_string(),
        status: status.to_string(),
        error: result.as_ref().err().map(ToString::to_string),
        seed,
        config: cfg.echo.clone(),
        inputs: input_hashes(&cfg.inputs),
        duration_seconds: clock.elapsed().as_secs_f64(),
        artifacts: dir.artifacts().to_vec(),
    };
    manifest.write(dir.path())?;
    result
}
