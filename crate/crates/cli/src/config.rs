//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use adiabatic::builtin::BuiltinExample;
use adiabatic::glauber::TorusSpec;
use adiabatic::markov::MatrixRepr;
use adiabatic::schedule::{ScheduleFamily, ScheduleSpec};
use adiabatic::{AdiabaticSpec, Generator, RateBound, StochasticMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Discrete,
    Continuous,
}

/// Initial and final kernels read from JSON files holding `{dim, rows}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixInput {
    pub mode: Mode,
    pub initial: PathBuf,
    #[serde(rename = "final")]
    pub final_: PathBuf,
    /// Continuous mode only; the largest exit rate over the path when absent.
    #[serde(default)]
    pub rate_bound: Option<f64>,
}

/// Parameters for `verify-bounds`; every bound whose inputs are present is
/// evaluated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub t_mix: Option<f64>,
    pub lambda: Option<f64>,
    pub m: Option<u32>,
    pub prefactor: Option<f64>,
    /// Shift-example size.
    pub n: Option<u64>,
    pub horizon: Option<u64>,
    pub torus: Option<TorusBoundParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusBoundParams {
    pub n: u64,
    pub d: u32,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub rescaled: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in example such as `shift-discrete(10)`; for `fit-scaling` over
    /// `sizes`, just the family name (`shift-discrete`).
    pub example: Option<String>,
    pub matrices: Option<MatrixInput>,
    pub torus: Option<TorusSpec>,
    /// Applied uniformly to every entry (not to torus examples).
    pub schedule: Option<ScheduleSpec>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub sizes: Option<Vec<usize>>,
    pub cap: Option<f64>,
    pub tol: Option<f64>,
    pub horizon: Option<f64>,
    pub grid_points: Option<usize>,
    pub paths: Option<u64>,
    pub seed: Option<u64>,
    pub bounds: Option<BoundParams>,
}

/// A loaded config plus the raw bytes of every file it read.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub echo: serde_json::Value,
    pub inputs: Vec<(PathBuf, Vec<u8>)>,
    base: PathBuf,
}

fn check_epsilon(eps: f64) -> Result<f64, CliError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(eps)
    } else {
        Err(CliError::Config(format!("epsilon {eps} outside (0, 1)")))
    }
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes =
            fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let echo: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_value(echo.clone())
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut loaded = LoadedConfig {
            config,
            echo,
            inputs: vec![(path.to_path_buf(), bytes)],
            base,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&mut self) -> Result<(), CliError> {
        let c = &self.config;
        if let Some(eps) = c.epsilon {
            check_epsilon(eps)?;
        }
        for &eps in c.epsilons.iter().flatten() {
            check_epsilon(eps)?;
        }
        let sources = [c.example.is_some(), c.matrices.is_some(), c.torus.is_some()];
        if sources.iter().filter(|&&x| x).count() > 1 {
            return Err(CliError::Config(
                "give at most one of example, matrices, torus".into(),
            ));
        }
        if let Some(h) = c.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(CliError::Config(format!("horizon {h} must be positive")));
            }
        }
        if let Some(m) = &c.matrices {
            for p in [&m.initial, &m.final_] {
                let full = self.base.join(p);
                let bytes = fs::read(&full)
                    .map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                self.inputs.push((full, bytes));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        self.config
            .epsilon
            .ok_or_else(|| CliError::Config("missing epsilon".into()))
    }

    pub fn family(&self) -> Result<Option<ScheduleFamily>, CliError> {
        match &self.config.schedule {
            None => Ok(None),
            Some(spec) => {
                let schedule = spec.build().map_err(CliError::from_input)?;
                Ok(Some(
                    ScheduleFamily::uniform(schedule).map_err(CliError::from_input)?,
                ))
            }
        }
    }

    pub fn builtin(&self) -> Result<Option<BuiltinExample>, CliError> {
        self.config
            .example
            .as_deref()
            .map(|name| name.parse::<BuiltinExample>().map_err(CliError::from_input))
            .transpose()
    }

    /// The experiment's state space and a size label for result tables:
    /// the example's `n`, the torus side, or the number of states.
    pub fn spec(&self) -> Result<(AdiabaticSpec, usize), CliError> {
        let family = self.family()?;
        if let Some(example) = self.builtin()? {
            let n = match example {
                BuiltinExample::ShiftDiscrete { n } | BuiltinExample::ShiftContinuous { n } => n,
                BuiltinExample::GlauberTorus { n, .. } => n,
            };
            return Ok((example.build_with(family).map_err(CliError::from_build)?, n));
        }
        if let Some(torus) = &self.config.torus {
            if family.is_some() {
                return Err(CliError::Config(
                    "torus experiments use their own schedules".into(),
                ));
            }
            return Ok((torus.build().map_err(CliError::from_build)?, torus.n));
        }
        if let Some(m) = &self.config.matrices {
            let parse = |k: usize| -> Result<MatrixRepr, CliError> {
                let (path, bytes) = &self.inputs[k];
                serde_json::from_slice(bytes)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            };
            let (a, b) = (parse(1)?, parse(2)?);
            let family = family.unwrap_or_default();
            let spec = match m.mode {
                Mode::Discrete => {
                    let a = StochasticMatrix::try_from(a).map_err(CliError::from_input)?;
                    let b = StochasticMatrix::try_from(b).map_err(CliError::from_input)?;
                    AdiabaticSpec::discrete(a, b, family)
                }
                Mode::Continuous => {
                    let a = Generator::try_from(a).map_err(CliError::from_input)?;
                    let b = Generator::try_from(b).map_err(CliError::from_input)?;
                    let bound = match m.rate_bound {
                        Some(l) => RateBound::new(l).map_err(CliError::from_input)?,
                        None => {
                            let top = a.max_exit_rate().max(b.max_exit_rate());
                            RateBound::new(top).map_err(CliError::from_input)?
                        }
                    };
                    AdiabaticSpec::continuous(a, b, family, bound)
                }
            }
            .map_err(CliError::from_build)?;
            let dim = spec.dim();
            return Ok((spec, dim));
        }
        Err(CliError::Config(
            "no experiment source: give example, matrices or torus".into(),
        ))
    }
}
