//! The experiments behind each subcommand.

use adiabatic::bounds::{
    continuous_adiabatic_bound, discrete_adiabatic_bound, fit_scaling_exponent,
    flat_schedule_minimal_horizon, kovchegov_continuous_explicit, shift_example_lower_bound_report,
    shift_example_minimal_horizon, torus_adiabatic_bound, BoundReport,
};
use adiabatic::builtin::BuiltinExample;
use adiabatic::engine::{
    adiabatic_time, evolve_continuous, mixing_time, sample_final_counts, trajectory_deviation,
    MixingOptions, SearchOptions, SearchReport, StartSet, DEFAULT_CAP, DEFAULT_TOL,
};
use adiabatic::glauber::{bitstring, symmetry_start_set, SpinConfig, TorusLattice};
use adiabatic::schedule::{flatness_order, Flatness, DEFAULT_FLATNESS_TOL, DEFAULT_MAX_ORDER};
use adiabatic::{AdiabaticSpec, Distribution, Error};

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::output::{float, ArtifactDir};

const SEARCH_HEADER: [&str; 5] = ["n", "epsilon", "T", "worst_case_tv", "flag"];

fn search_row(n: usize, r: &SearchReport) -> Vec<String> {
    vec![
        n.to_string(),
        float(r.epsilon),
        float(r.measured_time),
        float(r.worst_case_tv),
        r.monotonicity_flag.to_string(),
    ]
}

fn torus_lattice(cfg: &LoadedConfig) -> Result<Option<TorusLattice>, CliError> {
    if let Some(t) = &cfg.config.torus {
        return t.lattice().map(Some).map_err(CliError::from_input);
    }
    if let Some(BuiltinExample::GlauberTorus { n, d, .. }) = cfg.builtin()? {
        return TorusLattice::new(n, d)
            .map(Some)
            .map_err(CliError::from_input);
    }
    Ok(None)
}

fn search_options(cfg: &LoadedConfig) -> Result<SearchOptions, CliError> {
    let starts = match torus_lattice(cfg)? {
        Some(lattice) => symmetry_start_set(&lattice).map_err(CliError::from_input)?,
        None => StartSet::All,
    };
    Ok(search_options_from(cfg, starts))
}

fn search_options_from(cfg: &LoadedConfig, starts: StartSet) -> SearchOptions {
    SearchOptions {
        starts,
        tol: cfg.config.tol.unwrap_or(DEFAULT_TOL),
        cap: cfg.config.cap.unwrap_or(DEFAULT_CAP),
        ..SearchOptions::default()
    }
}

/// Runs a search; on timeout the last probe is kept as a partial artifact.
fn search(
    spec: &AdiabaticSpec,
    eps: f64,
    opts: &SearchOptions,
    out: &mut ArtifactDir,
) -> Result<SearchReport, CliError> {
    match adiabatic_time(spec, eps, opts) {
        Ok(r) => Ok(r),
        Err(
            e @ Error::SearchTimeout {
                last_probe,
                last_tv,
                ..
            },
        ) => {
            out.csv(
                "probes.csv",
                &["horizon", "worst_case_tv"],
                &[vec![float(last_probe), float(last_tv)]],
            )?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn mixing(cfg: &LoadedConfig, out: &mut ArtifactDir) -> Result<(), CliError> {
    let eps = cfg.epsilon()?;
    let (spec, n) = cfg.spec()?;
    let opts = MixingOptions {
        rate_bound: spec.rate_bound(),
        cap: cfg.config.cap.unwrap_or(DEFAULT_CAP),
        ..MixingOptions::default()
    };
    let t = mixing_time(spec.final_kernel(), eps, &opts)?;
    out.csv(
        "mixing.csv",
        &["n", "epsilon", "t_mix"],
        &[vec![n.to_string(), float(eps), float(t)]],
    )
}

pub fn adiabatic(cfg: &LoadedConfig, out: &mut ArtifactDir) -> Result<(), CliError> {
    let eps = cfg.epsilon()?;
    let (spec, n) = cfg.spec()?;
    let opts = search_options(cfg)?;
    let r = search(&spec, eps, &opts, out)?;
    out.csv("search.csv", &SEARCH_HEADER, &[search_row(n, &r)])?;
    let probes: Vec<Vec<String>> = r
        .probes
        .iter()
        .map(|p| vec![float(p.horizon), float(p.worst_case_tv)])
        .collect();
    out.csv("probes.csv", &["horizon", "worst_case_tv"], &probes)
}

pub fn trajectory(cfg: &LoadedConfig, out: &mut ArtifactDir) -> Result<(), CliError> {
    let horizon = cfg
        .config
        .horizon
        .ok_or_else(|| CliError::Config("missing horizon".into()))?;
    let points = cfg.config.grid_points.unwrap_or(101);
    if points < 2 {
        return Err(CliError::Config("grid_points must be >= 2".into()));
    }
    let (spec, _) = cfg.spec()?;
    let profile = trajectory_deviation(
        &spec,
        horizon,
        points,
        cfg.config.tol.unwrap_or(DEFAULT_TOL),
    )?;
    let rows: Vec<Vec<String>> = profile
        .profile
        .iter()
        .map(|&(t, d)| vec![float(t), float(d)])
        .collect();
    out.csv("profile.csv", &["t", "deviation"], &rows)
}

pub fn glauber(cfg: &LoadedConfig, seed: u64, out: &mut ArtifactDir) -> Result<(), CliError> {
    let lattice = torus_lattice(cfg)?.ok_or_else(|| {
        CliError::Config("glauber-run needs a torus or glauber-torus example".into())
    })?;
    let paths = cfg.config.paths.unwrap_or(10_000);
    if paths == 0 {
        return Err(CliError::Config("paths must be >= 1".into()));
    }
    let (spec, n) = cfg.spec()?;
    let horizon = match cfg.config.horizon {
        Some(h) => h,
        None => {
            let eps = cfg.epsilon()?;
            let r = search(&spec, eps, &search_options(cfg)?, out)?;
            out.csv("search.csv", &SEARCH_HEADER, &[search_row(n, &r)])?;
            r.measured_time
        }
    };
    let sites = lattice.sites();
    let start = SpinConfig::all_plus(sites).index();
    let tol = cfg.config.tol.unwrap_or(DEFAULT_TOL);
    let exact = evolve_continuous(
        &spec,
        &Distribution::point_mass(spec.dim(), start)?,
        horizon,
        tol,
    )?;
    let counts = sample_final_counts(&spec, start, horizon, paths, seed)?;
    let mut tv = 0.0;
    let rows: Vec<Vec<String>> = exact
        .weights()
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (&p, &c))| {
            let q = c as f64 / paths as f64;
            tv += 0.5 * (p - q).abs();
            vec![bitstring(k, sites), float(p), float(q)]
        })
        .collect();
    out.csv(
        "distribution.csv",
        &["configuration", "exact", "empirical"],
        &rows,
    )?;
    out.csv(
        "monte_carlo.csv",
        &["T", "paths", "seed", "empirical_tv", "threshold"],
        &[vec![
            float(horizon),
            paths.to_string(),
            seed.to_string(),
            float(tv),
            float(4.0 / (paths as f64).sqrt()),
        ]],
    )
}

pub fn fit(cfg: &LoadedConfig, out: &mut ArtifactDir) -> Result<(), CliError> {
    // size sweeps name a family rather than a single example
    let opts = match cfg.config.sizes {
        Some(_) => search_options_from(cfg, StartSet::All),
        None => search_options(cfg)?,
    };
    let family = cfg.family()?;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let variable;
    let mut run = |spec: AdiabaticSpec, n: usize, eps: f64, x: f64, out: &mut ArtifactDir| {
        let r = match search(&spec, eps, &opts, out) {
            Ok(r) => r,
            Err(e) => {
                out.csv("search.csv", &SEARCH_HEADER, &rows)?;
                return Err(e);
            }
        };
        rows.push(search_row(n, &r));
        samples.push((x, r.measured_time));
        Ok::<(), CliError>(())
    };
    match (&cfg.config.sizes, &cfg.config.epsilons) {
        (Some(sizes), None) => {
            variable = "n";
            let eps = cfg.epsilon()?;
            let name = cfg.config.example.as_deref().unwrap_or_default();
            let make: fn(usize) -> BuiltinExample = match name {
                "shift-discrete" => |n| BuiltinExample::ShiftDiscrete { n },
                "shift-continuous" => |n| BuiltinExample::ShiftContinuous { n },
                other => {
                    return Err(CliError::Config(format!(
                        "cannot sweep sizes of example {other:?}"
                    )))
                }
            };
            for &n in sizes {
                let spec = make(n)
                    .build_with(family.clone())
                    .map_err(CliError::from_build)?;
                run(spec, n, eps, n as f64, out)?;
            }
        }
        (None, Some(epsilons)) => {
            variable = "epsilon";
            let (spec, n) = cfg.spec()?;
            for &eps in epsilons {
                run(spec.clone(), n, eps, eps, out)?;
            }
        }
        _ => {
            return Err(CliError::Config(
                "fit-scaling needs exactly one of sizes, epsilons".into(),
            ))
        }
    }
    out.csv("search.csv", &SEARCH_HEADER, &rows)?;
    let f = fit_scaling_exponent(&samples).map_err(CliError::from_input)?;
    out.csv(
        "fit.csv",
        &[
            "variable",
            "exponent",
            "log_prefactor",
            "r_squared",
            "points",
        ],
        &[vec![
            variable.to_string(),
            float(f.exponent),
            float(f.log_prefactor),
            float(f.r_squared),
            samples.len().to_string(),
        ]],
    )
}

pub fn bounds(cfg: &LoadedConfig, out: &mut ArtifactDir) -> Result<(), CliError> {
    let p = cfg.config.bounds.clone().unwrap_or_default();
    let eps = cfg.config.epsilon;
    let m = p.m.unwrap_or(1);
    let prefactor = p.prefactor.unwrap_or(1.0);
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut push = |r: adiabatic::Result<BoundReport>| -> Result<(), CliError> {
        reports.push(r.map_err(CliError::from_input)?);
        Ok(())
    };
    if let (Some(t), Some(e)) = (p.t_mix, eps) {
        push(discrete_adiabatic_bound(t, e, m, prefactor))?;
        if let Some(l) = p.lambda {
            push(continuous_adiabatic_bound(t, e, m, l, prefactor))?;
            push(kovchegov_continuous_explicit(t, e, l))?;
        }
    }
    if let (Some(n), Some(t)) = (p.n, p.horizon) {
        push(shift_example_lower_bound_report(n, t, true))?;
        push(shift_example_lower_bound_report(n, t, false))?;
    }
    if let (Some(n), Some(e)) = (p.n, eps) {
        push(shift_example_minimal_horizon(n, e))?;
        let flatness = match &cfg.config.schedule {
            Some(spec) => {
                let phi = spec.build().map_err(CliError::from_input)?;
                flatness_order(&phi, DEFAULT_MAX_ORDER, DEFAULT_FLATNESS_TOL)
                    .map_err(CliError::from_input)?
            }
            None => Flatness {
                order: 1,
                leading: 1.0,
            },
        };
        push(flat_schedule_minimal_horizon(n, e, flatness))?;
    }
    if let (Some(t), Some(e)) = (&p.torus, eps) {
        push(torus_adiabatic_bound(
            t.n, t.d, e, t.beta1, t.beta2, t.rescaled,
        ))?;
    }
    if reports.is_empty() {
        return Err(CliError::Config(
            "no bound has all of its parameters".into(),
        ));
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.params_string(),
                float(r.value),
                r.kind.as_str().to_string(),
                r.notes.join("; "),
            ]
        })
        .collect();
    out.csv(
        "bounds.csv",
        &["bound_name", "parameters", "value", "kind", "notes"],
        &rows,
    )
}
