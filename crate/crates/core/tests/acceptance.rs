//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! straight to stderr so the verdicts show up even when output is captured.

mod common;

use std::io::Write;
use std::time::Instant;

use adiabatic::bounds::{
    faulhaber_sum, fit_scaling_exponent, kovchegov_continuous_explicit, shift_example_lower_bound,
};
use adiabatic::builtin::{shift_continuous, shift_discrete};
use adiabatic::engine::{
    adiabatic_time, evolve_continuous, evolve_piecewise_uniformization, mixing_time,
    sample_final_counts, worst_case, MixingOptions, SearchOptions, StartSet, DEFAULT_TOL,
};
use adiabatic::glauber::*;
use adiabatic::interpolation::interpolate_generator;
use adiabatic::schedule::{Schedule, ScheduleFamily};
use adiabatic::{tv_distance, Distribution};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("[acceptance] criterion {id:>2} {verdict}: {name}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn shift_times(ns: &[usize], eps: f64, family: &ScheduleFamily) -> Vec<(f64, f64)> {
    ns.iter()
        .map(|&n| {
            let spec = shift_discrete(n, family.clone()).unwrap();
            let r = adiabatic_time(&spec, eps, &SearchOptions::default()).unwrap();
            (n as f64, r.measured_time)
        })
        .collect()
}

#[test]
fn criterion_01_shift_lower_bound_sandwich() {
    let clock = Instant::now();
    let mut worst_gap = f64::INFINITY;
    let mut relax_gap = f64::INFINITY;
    for n in [5usize, 10, 20] {
        let spec = shift_discrete(n, ScheduleFamily::default()).unwrap();
        for t in [n, 2 * n * n, 10 * n * n] {
            let tv = worst_case(&spec, t as f64, &StartSet::All, DEFAULT_TOL)
                .unwrap()
                .worst_case_tv;
            let exact = shift_example_lower_bound(n as u64, t as u64, true).unwrap();
            let relaxed = 1.0 - (-((n * n) as f64) / (4.0 * t as f64)).exp();
            worst_gap = worst_gap.min(tv - exact + 1e-10);
            relax_gap = relax_gap.min(exact - relaxed + 1e-12);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    report(
        1,
        "shift lower-bound sandwich",
        worst_gap >= 0.0 && relax_gap >= 0.0 && secs < 10.0,
        format!("min(tv - exact + 1e-10) = {worst_gap:.3e}, min(exact - relaxed + 1e-12) = {relax_gap:.3e}, {secs:.2} s"),
    );
}

#[test]
fn criterion_02_quadratic_scaling() {
    let clock = Instant::now();
    let samples = shift_times(&[10, 20, 40], 0.05, &ScheduleFamily::default());
    let fit = fit_scaling_exponent(&samples).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    report(
        2,
        "T_eps ~ n^2 with linear schedules",
        (1.8..=2.2).contains(&fit.exponent) && fit.r_squared >= 0.99 && secs < 120.0,
        format!(
            "times {samples:?}, exponent {:.4}, r^2 {:.5}, {secs:.1} s",
            fit.exponent, fit.r_squared
        ),
    );
}

#[test]
fn criterion_03_flat_schedule_exponent() {
    let clock = Instant::now();
    let family = ScheduleFamily::uniform(Schedule::poly_flat(2).unwrap()).unwrap();
    let samples = shift_times(&[10, 20, 40], 0.05, &family);
    let fit = fit_scaling_exponent(&samples).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    report(
        3,
        "T_eps ~ n^1.5 with 1-(1-s)^2",
        (1.35..=1.65).contains(&fit.exponent) && secs < 300.0,
        format!(
            "times {samples:?}, exponent {:.4}, r^2 {:.5}, {secs:.1} s",
            fit.exponent, fit.r_squared
        ),
    );
}

#[test]
fn criterion_04_epsilon_scaling() {
    let clock = Instant::now();
    let spec = shift_discrete(20, ScheduleFamily::default()).unwrap();
    let samples: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            (
                eps,
                adiabatic_time(&spec, eps, &SearchOptions::default())
                    .unwrap()
                    .measured_time,
            )
        })
        .collect();
    let fit = fit_scaling_exponent(&samples).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    report(
        4,
        "T_eps ~ 1/eps on shift-discrete(20)",
        (-1.2..=-0.8).contains(&fit.exponent) && secs < 120.0,
        format!(
            "times {samples:?}, exponent {:.4}, {secs:.1} s",
            fit.exponent
        ),
    );
}

#[test]
fn criterion_05_continuous_scale_invariance() {
    let clock = Instant::now();
    let spec = shift_continuous(8, ScheduleFamily::default()).unwrap();
    let eps = 0.05;
    let base = adiabatic_time(&spec, eps, &SearchOptions::default())
        .unwrap()
        .measured_time;
    let mut worst: f64 = 0.0;
    let mut detail = format!("T_eps = {base:.4}");
    for m in [2.0, 4.0] {
        let slow = spec.time_scaled(1.0 / m).unwrap();
        let t = adiabatic_time(&slow, eps, &SearchOptions::default())
            .unwrap()
            .measured_time;
        let ratio = t / (m * base);
        worst = worst.max((ratio - 1.0).abs());
        detail += &format!(", M={m}: T = {t:.4} (ratio to M T_eps {ratio:.5})");
    }
    let secs = clock.elapsed().as_secs_f64();
    report(
        5,
        "continuous time-scale invariance",
        worst <= 0.1 && secs < 120.0,
        format!("{detail}, {secs:.1} s"),
    );
}

#[test]
fn criterion_06_glauber_correctness() {
    let clock = Instant::now();
    let lattice = TorusLattice::new(3, 2).unwrap();

    let params = IsingParams::new(0.4, Role::Final).unwrap();
    let pi = gibbs_distribution(&lattice, &params).unwrap();
    let q = glauber_generator(&lattice, &params).unwrap();
    let w = pi.weights();
    let mut balance: f64 = 0.0;
    for x in 0..w.len() {
        for j in 0..lattice.sites() {
            let y = x ^ (1 << j);
            balance = balance.max((w[x] * q.get(x, y) - w[y] * q.get(y, x)).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut schedule_gap: f64 = 0.0;
    for _ in 0..10 {
        let (b1, b2) = loop {
            let pair: (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            if (pair.0 - pair.1).abs() > 1e-3 {
                break pair;
            }
        };
        for a in [2.0, 4.0] {
            let phi = adiabatic_glauber_schedule(a, b1, b2).unwrap().schedule;
            for k in 0..100 {
                let s = k as f64 / 99.0;
                schedule_gap = schedule_gap
                    .max((phi.value(s) - derive_schedule_oracle(a, b1, b2, s).unwrap()).abs());
            }
        }
    }

    let spec = build_adiabatic_glauber_spec(&lattice, 0.2, 0.4).unwrap();
    let mut generator_gap: f64 = 0.0;
    for k in 0..20 {
        let s = k as f64 / 19.0;
        let assembled = interpolate_generator(&spec, s).unwrap();
        let direct = interpolated_glauber_generator(&lattice, 0.2, 0.4, s).unwrap();
        generator_gap = generator_gap.max((assembled.entries() - direct.entries()).abs().max());
    }
    let secs = clock.elapsed().as_secs_f64();
    report(
        6,
        "Glauber correctness on the 3x3 torus",
        balance < 1e-10 && schedule_gap < 1e-10 && generator_gap < 1e-10 && secs < 60.0,
        format!(
            "detailed balance {balance:.2e}, schedule vs oracle {schedule_gap:.2e}, generator vs direct {generator_gap:.2e}, {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_07_engine_cross_validation() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let lambda = rng.gen_range(0.5..=5.0);
        let horizon = rng.gen_range(1.0..=100.0);
        let spec = common::random_continuous_spec(&mut rng, 20, lambda);
        let nu = Distribution::point_mass(20, rng.gen_range(0..20)).unwrap();
        let rk = evolve_continuous(&spec, &nu, horizon, DEFAULT_TOL).unwrap();
        let pieces = ((horizon * lambda * 20.0).ceil() as usize).max(10_000);
        let pw = evolve_piecewise_uniformization(&spec, &nu, horizon, pieces, 1e-13).unwrap();
        worst = worst.max(tv_distance(&rk, &pw).unwrap());
    }
    let secs = clock.elapsed().as_secs_f64();
    report(
        7,
        "integrator vs piecewise uniformization",
        worst < 1e-6 && secs < 60.0,
        format!("max TV over 20 random 20-state specs {worst:.2e}, {secs:.1} s"),
    );
}

#[test]
fn criterion_08_faulhaber_identity() {
    let clock = Instant::now();
    let mut mismatches = 0;
    for k in 0..=10u32 {
        let mut brute = BigInt::from(0);
        for n in 1..=200u64 {
            if faulhaber_sum(n, k).unwrap() != brute {
                mismatches += 1;
            }
            brute += BigInt::from(n).pow(k);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    report(
        8,
        "power-sum closed form",
        mismatches == 0 && secs < 1.0,
        format!("{mismatches} mismatches over n <= 200, k <= 10, {secs:.3} s"),
    );
}

#[test]
fn criterion_09_explicit_continuous_bound() {
    let clock = Instant::now();
    let reference = kovchegov_continuous_explicit(10.0, 0.1, 1.0).unwrap().value;
    let eps = 0.1;
    let spec = shift_continuous(6, ScheduleFamily::default()).unwrap();
    let opts = MixingOptions {
        rate_bound: spec.rate_bound(),
        ..MixingOptions::default()
    };
    let t_mix = mixing_time(spec.final_kernel(), eps / 2.0, &opts).unwrap();
    let bound = kovchegov_continuous_explicit(t_mix, eps, spec.rate_bound().unwrap().lambda())
        .unwrap()
        .value;
    let measured = adiabatic_time(&spec, eps, &SearchOptions::default())
        .unwrap()
        .measured_time;
    let secs = clock.elapsed().as_secs_f64();
    report(
        9,
        "explicit continuous bound",
        reference == 1010.025 && bound >= measured && secs < 60.0,
        format!("value(10, 0.1, 1) = {reference}, t_mix(0.05) = {t_mix:.4}, bound {bound:.3} vs T_eps {measured:.4}, {secs:.1} s"),
    );
}

#[test]
fn criterion_10_monte_carlo_consistency() {
    let clock = Instant::now();
    let paths = 100_000u64;
    let lattice = TorusLattice::new(3, 2).unwrap();
    let spec = build_adiabatic_glauber_spec(&lattice, 0.2, 0.4).unwrap();
    let eps = 0.05;
    let opts = SearchOptions {
        starts: symmetry_start_set(&lattice).unwrap(),
        ..SearchOptions::default()
    };
    let search = adiabatic_time(&spec, eps, &opts).unwrap();
    let horizon = search.measured_time;
    let start = SpinConfig::all_plus(lattice.sites()).index();
    let exact = evolve_continuous(
        &spec,
        &Distribution::point_mass(512, start).unwrap(),
        horizon,
        DEFAULT_TOL,
    )
    .unwrap();
    let counts = sample_final_counts(&spec, start, horizon, paths, 2024).unwrap();
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / paths as f64).collect();
    let tv = 0.5
        * exact
            .weights()
            .iter()
            .zip(&empirical)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    // mean TV of a multinomial sample around the exact law, to first order
    let noise: f64 = exact
        .weights()
        .iter()
        .map(|&p| (p * (1.0 - p) / (2.0 * std::f64::consts::PI * paths as f64)).sqrt())
        .sum();
    // Pearson statistic over the occupied bins: near its degrees of freedom
    // when the sampler draws from the exact law
    let (mut chi2, mut bins) = (0.0, 0usize);
    for (&p, &c) in exact.weights().iter().zip(&counts) {
        let expected = p * paths as f64;
        if expected > 0.0 {
            chi2 += (c as f64 - expected).powi(2) / expected;
            bins += 1;
        }
    }
    let dof = (bins - 1) as f64;
    let z = (chi2 - dof) / (2.0 * dof).sqrt();
    let threshold = 4.0 / (paths as f64).sqrt();
    let secs = clock.elapsed().as_secs_f64();
    report(
        10,
        "Monte Carlo vs exact evolution on the 3x3 torus",
        tv <= threshold && secs < 180.0,
        format!(
            "T_eps = {horizon:.4}, empirical TV {tv:.5} vs threshold {threshold:.5} (expected sampling TV {noise:.5}), chi^2 {chi2:.1} on {dof} dof (z = {z:.2}), {secs:.1} s"
        ),
    );
}
