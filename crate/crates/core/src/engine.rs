//! Evolution of interpolated chains and the measurements built on it:
//! worst-case distance to the final equilibrium, mixing and adiabatic
//! times, deviation from the instantaneous equilibrium, and path sampling.
//!
//! All evolution works on row-major blocks holding one distribution per
//! starting state, pushed through sparse kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::AdiabaticSpec;
use crate::markov::{
    poisson_mixture, tv_weights, Distribution, Generator, Kernel, RateBound, StochasticMatrix,
};
use crate::sparse::SparseRows;

/// Default global L1 error budget for continuous integration.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default cap on steps (discrete) or time (continuous) in searches.
pub const DEFAULT_CAP: f64 = 1e6;

/// Which point masses to start from when taking a worst case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSet {
    All,
    /// A subset known to attain the maximum, e.g. symmetry-orbit
    /// representatives.
    States(Vec<usize>),
}

impl StartSet {
    fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            StartSet::All => Ok((0..n).collect()),
            StartSet::States(states) => {
                if states.is_empty() {
                    return Err(Error::InvalidArgument("empty start set".into()));
                }
                if let Some(&bad) = states.iter().find(|&&x| x >= n) {
                    return Err(Error::InvalidArgument(format!(
                        "start state {bad} outside 0..{n}"
                    )));
                }
                Ok(states.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub horizon: f64,
    pub starts: Vec<usize>,
    pub per_start_tv: Vec<f64>,
    pub worst_case_tv: f64,
    pub worst_start: usize,
    /// Evolved distribution of the worst start.
    pub final_distribution: Distribution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub horizon: f64,
    pub worst_case_tv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub measured_time: f64,
    pub epsilon: f64,
    /// Largest failing and smallest passing horizon found by the search.
    /// The lower end is 0 when every probe down to the smallest passed.
    pub bracket: (f64, f64),
    pub monotonicity_flag: bool,
    pub evaluations: usize,
    pub worst_case_tv: f64,
    /// Worst-case distance at twice the measured time.
    pub tv_at_double: f64,
    pub initial_horizon: f64,
    pub probes: Vec<Probe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub starts: StartSet,
    /// Integration tolerance (continuous mode).
    pub tol: f64,
    /// Bisection resolution relative to the answer (continuous mode).
    pub relative_precision: f64,
    pub cap: f64,
    /// Starting horizon; the mixing time of the final kernel when absent.
    pub initial_horizon: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            starts: StartSet::All,
            tol: DEFAULT_TOL,
            relative_precision: 1e-3,
            cap: DEFAULT_CAP,
            initial_horizon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingOptions {
    /// Required for generators.
    pub rate_bound: Option<RateBound>,
    /// Initial grid spacing for generators; `1 / lambda` when absent.
    pub time_grid: Option<f64>,
    pub cap: f64,
    pub tol: f64,
    pub starts: StartSet,
    pub relative_precision: f64,
}

impl Default for MixingOptions {
    fn default() -> Self {
        MixingOptions {
            rate_bound: None,
            time_grid: None,
            cap: DEFAULT_CAP,
            tol: 1e-12,
            starts: StartSet::All,
            relative_precision: 1e-3,
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn steps_of(horizon: f64) -> Result<u64> {
    if !(horizon >= 1.0) || horizon.fract() != 0.0 || horizon > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "discrete horizon must be an integer >= 1, got {horizon}"
        )));
    }
    Ok(horizon as u64)
}

fn point_mass_block(n: usize, starts: &[usize]) -> Vec<f64> {
    let mut block = vec![0.0; n * starts.len()];
    for (r, &x) in starts.iter().enumerate() {
        block[r * n + x] = 1.0;
    }
    block
}

/// Applies steps `first..=last` of a `steps`-step discrete evolution.
fn advance_discrete(
    spec: &AdiabaticSpec,
    block: &mut Vec<f64>,
    steps: u64,
    first: u64,
    last: u64,
) -> Result<()> {
    let mut phi = Vec::new();
    let mut kernel = SparseRows::default();
    let mut scratch = vec![0.0; block.len()];
    for j in first..=last {
        spec.fill_at(j as f64 / steps as f64, &mut phi, &mut kernel)?;
        kernel.left_mul_block(block, &mut scratch);
        std::mem::swap(block, &mut scratch);
    }
    Ok(())
}

/// `nu P_{1/T} P_{2/T} ... P_1`.
pub fn evolve_discrete(
    spec: &AdiabaticSpec,
    nu: &Distribution,
    steps: u64,
) -> Result<Distribution> {
    if !spec.is_discrete() {
        return Err(Error::ModeMismatch(
            "evolve_discrete needs a discrete-time spec",
        ));
    }
    check_dim(spec.dim(), nu.len())?;
    if steps == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let mut block = nu.weights().to_vec();
    advance_discrete(spec, &mut block, steps, 1, steps)?;
    Distribution::from_evolved(block)
}

/// Classical RK4 on a block, `y' = y Q(t)`, with step doubling.
struct Integrator<'a> {
    spec: &'a AdiabaticSpec,
    horizon: f64,
    tol: f64,
    h_max: f64,
    h: f64,
    phi: Vec<f64>,
    steps: usize,
}

struct Stages {
    q: [SparseRows; 5],
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    twice: Vec<f64>,
}

impl Stages {
    fn new(len: usize) -> Self {
        let v = || vec![0.0; len];
        Stages {
            q: Default::default(),
            k1: v(),
            k2: v(),
            k3: v(),
            k4: v(),
            tmp: v(),
            full: v(),
            half: v(),
            twice: v(),
        }
    }
}

/// One RK4 step from `y` with precomputed `k1 = y Q(start)`, writing `out`.
#[allow(clippy::too_many_arguments)]
fn rk4_step(
    q_mid: &SparseRows,
    q_end: &SparseRows,
    y: &[f64],
    k1: &[f64],
    h: f64,
    k2: &mut [f64],
    k3: &mut [f64],
    k4: &mut [f64],
    tmp: &mut [f64],
    out: &mut [f64],
) {
    for ((t, &a), &b) in tmp.iter_mut().zip(y).zip(k1) {
        *t = a + 0.5 * h * b;
    }
    q_mid.left_mul_block(tmp, k2);
    for ((t, &a), &b) in tmp.iter_mut().zip(y).zip(k2.iter()) {
        *t = a + 0.5 * h * b;
    }
    q_mid.left_mul_block(tmp, k3);
    for ((t, &a), &b) in tmp.iter_mut().zip(y).zip(k3.iter()) {
        *t = a + h * b;
    }
    q_end.left_mul_block(tmp, k4);
    for i in 0..out.len() {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

impl<'a> Integrator<'a> {
    fn new(spec: &'a AdiabaticSpec, horizon: f64, tol: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon {horizon}")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol}")));
        }
        let lambda = spec.require_rate_bound()?.lambda();
        let h_max = if lambda > 0.0 {
            (0.1 / lambda).min(horizon / 1000.0)
        } else {
            horizon / 1000.0
        };
        Ok(Integrator {
            spec,
            horizon,
            tol,
            h_max,
            h: h_max,
            phi: Vec::new(),
            steps: 0,
        })
    }

    fn generator(&mut self, t: f64, out: &mut SparseRows) -> Result<()> {
        let s = (t / self.horizon).clamp(0.0, 1.0);
        self.spec.fill_at(s, &mut self.phi, out)
    }

    /// Advances `y` from `t0` to `t1`; the error budget is `tol` over the
    /// whole horizon, shared in proportion to step length.
    fn advance(&mut self, y: &mut [f64], t0: f64, t1: f64, st: &mut Stages) -> Result<()> {
        let n = self.spec.dim();
        let mut t = t0;
        let mut q0 = std::mem::take(&mut st.q[0]);
        self.generator(t, &mut q0)?;
        while t < t1 {
            // absorb a sliver left over by rounding into this step
            let h = if t1 - t <= self.h * (1.0 + 1e-9) {
                t1 - t
            } else {
                self.h
            };
            let last = t + h >= t1;
            let mut qs = std::mem::take(&mut st.q);
            self.generator(t + 0.25 * h, &mut qs[1])?;
            self.generator(t + 0.5 * h, &mut qs[2])?;
            self.generator(t + 0.75 * h, &mut qs[3])?;
            self.generator(if last { t1 } else { t + h }, &mut qs[4])?;

            q0.left_mul_block(y, &mut st.k1);
            rk4_step(
                &qs[2],
                &qs[4],
                y,
                &st.k1,
                h,
                &mut st.k2,
                &mut st.k3,
                &mut st.k4,
                &mut st.tmp,
                &mut st.full,
            );
            rk4_step(
                &qs[1],
                &qs[2],
                y,
                &st.k1,
                0.5 * h,
                &mut st.k2,
                &mut st.k3,
                &mut st.k4,
                &mut st.tmp,
                &mut st.half,
            );
            qs[2].left_mul_block(&st.half, &mut st.k1);
            rk4_step(
                &qs[3],
                &qs[4],
                &st.half,
                &st.k1,
                0.5 * h,
                &mut st.k2,
                &mut st.k3,
                &mut st.k4,
                &mut st.tmp,
                &mut st.twice,
            );

            let err = st
                .twice
                .chunks_exact(n)
                .zip(st.full.chunks_exact(n))
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
                .fold(0.0, f64::max)
                / 15.0;
            // differences below this are rounding noise, not truncation error
            let budget = (self.tol * h / self.horizon).max(64.0 * f64::EPSILON);
            let factor = if err > 0.0 {
                0.9 * (budget / err).powf(0.2)
            } else {
                2.0
            };
            if err <= budget {
                for ((v, &a), &b) in y.iter_mut().zip(&st.twice).zip(&st.full) {
                    *v = a + (a - b) / 15.0;
                }
                t = if last { t1 } else { t + h };
                std::mem::swap(&mut q0, &mut qs[4]);
                self.steps += 1;
                if !last || h >= self.h {
                    self.h = (self.h * factor.min(2.0)).min(self.h_max);
                }
            } else {
                self.h = h * factor.clamp(0.1, 0.9);
                if self.h < self.horizon * 1e-12 {
                    return Err(Error::Integration {
                        t,
                        reason: format!("step size underflow (error {err:e}, budget {budget:e})"),
                    });
                }
            }
            st.q = qs;
        }
        st.q[0] = q0;
        Ok(())
    }
}

fn integrate_block(spec: &AdiabaticSpec, block: &mut [f64], horizon: f64, tol: f64) -> Result<()> {
    let mut integrator = Integrator::new(spec, horizon, tol)?;
    let mut stages = Stages::new(block.len());
    integrator.advance(block, 0.0, horizon, &mut stages)
}

/// Solves `d mu / dt = mu Q[t / T]` on `[0, T]` to global L1 error `tol`.
pub fn evolve_continuous(
    spec: &AdiabaticSpec,
    nu: &Distribution,
    horizon: f64,
    tol: f64,
) -> Result<Distribution> {
    if spec.is_discrete() {
        return Err(Error::ModeMismatch(
            "evolve_continuous needs a continuous-time spec",
        ));
    }
    check_dim(spec.dim(), nu.len())?;
    let mut block = nu.weights().to_vec();
    integrate_block(spec, &mut block, horizon, tol)?;
    Distribution::from_evolved(block)
}

/// Reference solution: the generator is frozen at the midpoint of each of
/// `pieces` equal subintervals and every piece is propagated exactly by
/// uniformization. Second order in the piece length.
pub fn evolve_piecewise_uniformization(
    spec: &AdiabaticSpec,
    nu: &Distribution,
    horizon: f64,
    pieces: usize,
    tol: f64,
) -> Result<Distribution> {
    if spec.is_discrete() {
        return Err(Error::ModeMismatch(
            "piecewise uniformization needs a continuous-time spec",
        ));
    }
    check_dim(spec.dim(), nu.len())?;
    if pieces == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(
            "need horizon > 0 and at least one piece".into(),
        ));
    }
    let lambda = spec.require_rate_bound()?.lambda();
    let dt = horizon / pieces as f64;
    let mut block = nu.weights().to_vec();
    let mut phi = Vec::new();
    let mut q = SparseRows::default();
    for k in 0..pieces {
        spec.fill_at((k as f64 + 0.5) / pieces as f64, &mut phi, &mut q)?;
        let required = q.max_exit_rate();
        if required > lambda * (1.0 + 1e-12) {
            return Err(Error::InvalidRateBound { lambda, required });
        }
        if lambda > 0.0 {
            poisson_mixture(
                &q.uniformized(lambda),
                lambda,
                &mut block,
                dt,
                tol / pieces as f64,
            );
        }
    }
    Distribution::from_evolved(block)
}

fn evolve_block(
    spec: &AdiabaticSpec,
    starts: &[usize],
    horizon: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = spec.dim();
    let mut block = point_mass_block(n, starts);
    if spec.is_discrete() {
        let steps = steps_of(horizon)?;
        advance_discrete(spec, &mut block, steps, 1, steps)?;
    } else {
        integrate_block(spec, &mut block, horizon, tol)?;
    }
    Ok(block)
}

fn summarize(
    horizon: f64,
    starts: Vec<usize>,
    block: Vec<f64>,
    target: &Distribution,
) -> Result<EvolutionResult> {
    let n = target.len();
    let per_start_tv: Vec<f64> = block
        .chunks_exact(n)
        .map(|row| tv_weights(row, target.weights()))
        .collect();
    let (worst_row, &worst_case_tv) = per_start_tv
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty start set");
    let final_distribution =
        Distribution::from_evolved(block[worst_row * n..(worst_row + 1) * n].to_vec())?;
    Ok(EvolutionResult {
        horizon,
        worst_start: starts[worst_row],
        starts,
        per_start_tv,
        worst_case_tv,
        final_distribution,
    })
}

/// Evolves every start in `starts` over `horizon` and compares with the
/// final equilibrium. The maximum over all distributions is attained at a
/// point mass, so `StartSet::All` gives the exact worst case.
pub fn worst_case(
    spec: &AdiabaticSpec,
    horizon: f64,
    starts: &StartSet,
    tol: f64,
) -> Result<EvolutionResult> {
    let starts = starts.resolve(spec.dim())?;
    let block = evolve_block(spec, &starts, horizon, tol)?;
    summarize(horizon, starts, block, spec.final_stationary())
}

/// Mixing time of a homogeneous kernel or generator.
pub fn mixing_time(kernel: &Kernel, epsilon: f64, opts: &MixingOptions) -> Result<f64> {
    match kernel {
        Kernel::Discrete(p) => mixing_time_discrete(p, epsilon, opts).map(|t| t as f64),
        Kernel::Continuous(q) => {
            let bound = opts
                .rate_bound
                .unwrap_or_else(|| RateBound::for_generator(q));
            mixing_time_continuous(q, epsilon, bound, opts)
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside (0, 1)"
        )));
    }
    Ok(())
}

fn max_tv(block: &[f64], target: &[f64]) -> f64 {
    block
        .chunks_exact(target.len())
        .map(|row| tv_weights(row, target))
        .fold(0.0, f64::max)
}

pub fn mixing_time_discrete(
    p: &StochasticMatrix,
    epsilon: f64,
    opts: &MixingOptions,
) -> Result<u64> {
    check_epsilon(epsilon)?;
    let pi = p.stationary(crate::interpolation::STATIONARY_TOL)?;
    let starts = opts.starts.resolve(p.dim())?;
    let sparse = p.to_sparse();
    let mut block = point_mass_block(p.dim(), &starts);
    let mut scratch = vec![0.0; block.len()];
    let cap = opts.cap.min(u64::MAX as f64) as u64;
    for t in 1..=cap {
        sparse.left_mul_block(&block, &mut scratch);
        std::mem::swap(&mut block, &mut scratch);
        if max_tv(&block, pi.weights()) <= epsilon {
            return Ok(t);
        }
    }
    Err(Error::MixingTimeout { cap: opts.cap })
}

pub fn mixing_time_continuous(
    q: &Generator,
    epsilon: f64,
    bound: RateBound,
    opts: &MixingOptions,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    bound.check(q)?;
    let pi = q.stationary(crate::interpolation::STATIONARY_TOL)?;
    let starts = opts.starts.resolve(q.dim())?;
    let lambda = bound.lambda();
    if lambda == 0.0 {
        // nothing moves; only a chain already at equilibrium mixes
        return if max_tv(&point_mass_block(q.dim(), &starts), pi.weights()) <= epsilon {
            Ok(0.0)
        } else {
            Err(Error::MixingTimeout { cap: opts.cap })
        };
    }
    let p1 = q.to_sparse().uniformized(lambda);
    let grid = opts.time_grid.unwrap_or(1.0 / lambda);
    if !(grid > 0.0) {
        return Err(Error::InvalidArgument(format!("time grid {grid}")));
    }
    let advance = |block: &mut [f64], dt: f64| poisson_mixture(&p1, lambda, block, dt, opts.tol);

    let mut lo = 0.0;
    let mut lo_block = point_mass_block(q.dim(), &starts);
    let mut hi = grid;
    let mut hi_block = lo_block.clone();
    advance(&mut hi_block, hi);
    while max_tv(&hi_block, pi.weights()) > epsilon {
        if hi > opts.cap {
            return Err(Error::MixingTimeout { cap: opts.cap });
        }
        lo = hi;
        lo_block.copy_from_slice(&hi_block);
        advance(&mut hi_block, hi);
        hi *= 2.0;
    }
    while hi - lo > opts.relative_precision * hi {
        let mid = 0.5 * (lo + hi);
        let mut block = lo_block.clone();
        advance(&mut block, mid - lo);
        if max_tv(&block, pi.weights()) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
            lo_block = block;
        }
    }
    Ok(hi)
}

/// Least horizon whose worst-case distance to the final equilibrium is at
/// most `epsilon`.
///
/// The search starts from the mixing time of the final kernel. If that
/// horizon fails it doubles until one passes, otherwise it halves until
/// one fails; the bracket is then bisected (to integers in discrete mode,
/// to `relative_precision` in continuous mode). Every probe is recorded,
/// and the report is flagged when a passing horizon is followed by a
/// failing larger one, including the re-check at twice the answer.
pub fn adiabatic_time(
    spec: &AdiabaticSpec,
    epsilon: f64,
    opts: &SearchOptions,
) -> Result<SearchReport> {
    check_epsilon(epsilon)?;
    let discrete = spec.is_discrete();
    let t0 = match opts.initial_horizon {
        Some(t) => t,
        None => {
            let mixing = MixingOptions {
                rate_bound: spec.rate_bound(),
                cap: opts.cap,
                starts: opts.starts.clone(),
                ..MixingOptions::default()
            };
            mixing_time(spec.final_kernel(), epsilon, &mixing)?
        }
    };
    let t0 = if discrete { t0.round().max(1.0) } else { t0 };
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial horizon {t0}")));
    }
    let starts = opts.starts.resolve(spec.dim())?;
    let mut probes: Vec<Probe> = Vec::new();
    let mut evaluate = |horizon: f64| -> Result<f64> {
        let block = evolve_block(spec, &starts, horizon, opts.tol)?;
        let tv = max_tv(&block, spec.final_stationary().weights());
        probes.push(Probe {
            horizon,
            worst_case_tv: tv,
        });
        Ok(tv)
    };

    let (mut lo, mut hi, mut hi_tv);
    let tv0 = evaluate(t0)?;
    if tv0 <= epsilon {
        hi = t0;
        hi_tv = tv0;
        lo = 0.0;
        loop {
            let cand = if discrete {
                (hi / 2.0).floor()
            } else {
                hi / 2.0
            };
            if cand < 1.0 && discrete || cand < t0 * 1e-6 {
                break;
            }
            let tv = evaluate(cand)?;
            if tv <= epsilon {
                hi = cand;
                hi_tv = tv;
            } else {
                lo = cand;
                break;
            }
        }
    } else {
        lo = t0;
        let mut lo_tv = tv0;
        loop {
            let cand = 2.0 * lo;
            if cand > opts.cap {
                return Err(Error::SearchTimeout {
                    cap: opts.cap,
                    last_probe: lo,
                    last_tv: lo_tv,
                });
            }
            let tv = evaluate(cand)?;
            if tv <= epsilon {
                hi = cand;
                hi_tv = tv;
                break;
            }
            lo = cand;
            lo_tv = tv;
        }
    }

    if lo > 0.0 || !discrete {
        loop {
            let done = if discrete {
                hi - lo <= 1.0
            } else {
                hi - lo <= opts.relative_precision * hi
            };
            if done {
                break;
            }
            let mid = if discrete {
                (0.5 * (lo + hi)).floor()
            } else {
                0.5 * (lo + hi)
            };
            let tv = evaluate(mid)?;
            if tv <= epsilon {
                hi = mid;
                hi_tv = tv;
            } else {
                lo = mid;
            }
        }
    }

    let tv_at_double = evaluate(2.0 * hi)?;
    let mut sorted = probes.clone();
    sorted.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let mut seen_pass = false;
    let mut monotonicity_flag = false;
    for p in &sorted {
        if p.worst_case_tv <= epsilon {
            seen_pass = true;
        } else if seen_pass {
            monotonicity_flag = true;
        }
    }
    Ok(SearchReport {
        measured_time: hi,
        epsilon,
        bracket: (lo, hi),
        monotonicity_flag,
        evaluations: probes.len(),
        worst_case_tv: hi_tv,
        tv_at_double,
        initial_horizon: t0,
        probes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationProfile {
    pub sup_deviation: f64,
    /// `(t, tv(mu_t, pi_t))` on the grid.
    pub profile: Vec<(f64, f64)>,
}

/// Distance between the evolved law and the equilibrium of the frozen
/// kernel along `grid_points` equally spaced times in `[0, T]`, starting
/// from the equilibrium of the initial kernel.
pub fn trajectory_deviation(
    spec: &AdiabaticSpec,
    horizon: f64,
    grid_points: usize,
    tol: f64,
) -> Result<DeviationProfile> {
    if grid_points < 2 {
        return Err(Error::InvalidArgument(
            "need at least two grid points".into(),
        ));
    }
    let discrete = spec.is_discrete();
    let steps = if discrete { steps_of(horizon)? } else { 0 };
    let stationary_at = |s: f64| -> Result<Distribution> {
        let kernel = spec.kernel_at(s)?;
        crate::markov::stationary_distribution(&kernel, crate::interpolation::STATIONARY_TOL)
            .map_err(|e| match e {
                Error::NonUniqueStationary { nullity, .. } => Error::NonUniqueStationary {
                    nullity,
                    at: Some(s),
                },
                other => other,
            })
    };
    let mut mu = stationary_at(0.0)?.into_weights();

    let mut integrator = if discrete {
        None
    } else {
        Some(Integrator::new(spec, horizon, tol)?)
    };
    let mut stages = Stages::new(mu.len());
    let mut profile = Vec::with_capacity(grid_points);
    let mut done_steps = 0u64;
    let mut t_prev = 0.0;
    for k in 0..grid_points {
        let frac = k as f64 / (grid_points - 1) as f64;
        let t = if discrete {
            let target = (frac * steps as f64).round() as u64;
            let mut block = std::mem::take(&mut mu);
            if target > done_steps {
                advance_discrete(spec, &mut block, steps, done_steps + 1, target)?;
            }
            mu = block;
            done_steps = target;
            target as f64
        } else {
            let t = frac * horizon;
            if t > t_prev {
                integrator
                    .as_mut()
                    .expect("continuous integrator")
                    .advance(&mut mu, t_prev, t, &mut stages)?;
            }
            t_prev = t;
            t
        };
        let pi_t = stationary_at(t / horizon)?;
        profile.push((t, tv_weights(&mu, pi_t.weights())));
    }
    let sup_deviation = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(DeviationProfile {
        sup_deviation,
        profile,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub final_state: usize,
    pub event_times: Vec<f64>,
}

/// Simulates one path of the interpolated continuous chain by thinning a
/// rate-`lambda` Poisson clock. `event_times` are the accepted jump times.
pub fn sample_path(
    spec: &AdiabaticSpec,
    start: usize,
    horizon: f64,
    seed: u64,
) -> Result<SamplePath> {
    let mut sampler = PathSampler::new(spec, horizon)?;
    if start >= spec.dim() {
        return Err(Error::InvalidArgument(format!("start state {start}")));
    }
    let mut rng = path_rng(seed, 0);
    let mut event_times = Vec::new();
    let final_state = sampler.run(start, &mut rng, Some(&mut event_times))?;
    Ok(SamplePath {
        final_state,
        event_times,
    })
}

/// Generator for path `index`: key from `seed`, ChaCha stream `index`.
/// XOR-ing the index into the seed would make seeds `a` and `b` share the
/// same set of streams over any power-of-two block of paths.
fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Final-state counts over `paths` independent paths; path `i` draws from
/// stream `i` of the generator keyed by `seed`, so path 0 reproduces
/// [`sample_path`] with the same seed.
pub fn sample_final_counts(
    spec: &AdiabaticSpec,
    start: usize,
    horizon: f64,
    paths: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    if start >= spec.dim() {
        return Err(Error::InvalidArgument(format!("start state {start}")));
    }
    let mut sampler = PathSampler::new(spec, horizon)?;
    let mut counts = vec![0u64; spec.dim()];
    for i in 0..paths {
        let mut rng = path_rng(seed, i);
        counts[sampler.run(start, &mut rng, None)?] += 1;
    }
    Ok(counts)
}

struct PathSampler<'a> {
    spec: &'a AdiabaticSpec,
    horizon: f64,
    lambda: f64,
    phi: Vec<f64>,
    /// Event counter for which `phi[m]` is current.
    phi_epoch: Vec<u64>,
    epoch: u64,
}

impl<'a> PathSampler<'a> {
    fn new(spec: &'a AdiabaticSpec, horizon: f64) -> Result<Self> {
        if spec.is_discrete() {
            return Err(Error::ModeMismatch(
                "path sampling needs a continuous-time spec",
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon {horizon}")));
        }
        let members = spec.family().members().len();
        Ok(PathSampler {
            spec,
            horizon,
            lambda: spec.require_rate_bound()?.lambda(),
            phi: vec![0.0; members],
            phi_epoch: vec![u64::MAX; members],
            epoch: 0,
        })
    }

    fn run(
        &mut self,
        start: usize,
        rng: &mut ChaCha8Rng,
        mut events: Option<&mut Vec<f64>>,
    ) -> Result<usize> {
        let mut x = start;
        if self.lambda == 0.0 {
            return Ok(x);
        }
        let mut t = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            t += gap / self.lambda;
            if t > self.horizon {
                return Ok(x);
            }
            self.epoch += 1;
            let s = t / self.horizon;
            let u: f64 = rng.gen::<f64>() * self.lambda;
            let mut acc = 0.0;
            let mut next = None;
            for e in self.spec.row_entries(x) {
                if self.phi_epoch[e.member] != self.epoch {
                    self.phi[e.member] = self.spec.family().members()[e.member].value(s);
                    self.phi_epoch[e.member] = self.epoch;
                }
                acc += e.at(&self.phi);
                if next.is_none() && u < acc {
                    next = Some(e.col);
                }
            }
            if acc > self.lambda * (1.0 + 1e-9) {
                return Err(Error::InvalidRateBound {
                    lambda: self.lambda,
                    required: acc,
                });
            }
            if let Some(y) = next {
                x = y;
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(t);
                }
            }
        }
    }
}

/// Empirical distribution of sampled counts.
pub fn empirical_distribution(counts: &[u64]) -> Result<Distribution> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    Distribution::from_evolved(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{shift_continuous, shift_discrete, shift_matrices};
    use crate::markov::{step_distribution, transient_distribution, tv_distance};
    use crate::schedule::ScheduleFamily;

    fn dist(w: &[f64]) -> Distribution {
        Distribution::new(w.to_vec()).unwrap()
    }

    fn pair() -> (StochasticMatrix, StochasticMatrix) {
        (
            StochasticMatrix::from_rows(&[
                vec![0.9, 0.1, 0.0],
                vec![0.2, 0.5, 0.3],
                vec![0.0, 0.4, 0.6],
            ])
            .unwrap(),
            StochasticMatrix::from_rows(&[
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.3, 0.4],
                vec![0.5, 0.0, 0.5],
            ])
            .unwrap(),
        )
    }

    #[test]
    fn single_step_applies_final_kernel() {
        let (a, b) = pair();
        let spec = AdiabaticSpec::discrete(a, b.clone(), ScheduleFamily::default()).unwrap();
        let nu = dist(&[0.2, 0.3, 0.5]);
        let out = evolve_discrete(&spec, &nu, 1).unwrap();
        let expect = step_distribution(&nu, &b).unwrap();
        assert!(tv_distance(&out, &expect).unwrap() < 1e-15);
        assert!(evolve_discrete(&spec, &nu, 0).is_err());
    }

    #[test]
    fn homogeneous_product_is_a_power() {
        let (a, _) = pair();
        let spec =
            AdiabaticSpec::discrete(a.clone(), a.clone(), ScheduleFamily::default()).unwrap();
        let nu = dist(&[1.0, 0.0, 0.0]);
        let mut expect = nu.clone();
        for _ in 0..7 {
            expect = step_distribution(&expect, &a).unwrap();
        }
        let out = evolve_discrete(&spec, &nu, 7).unwrap();
        assert!(tv_distance(&out, &expect).unwrap() < 1e-14);
    }

    #[test]
    fn shift_example_distance_exceeds_factorial_bound() {
        let spec = shift_discrete(5, ScheduleFamily::default()).unwrap();
        // oracle: dense product of the interpolated matrices, written out directly
        let (reset, shift) = shift_matrices(5).unwrap();
        let mut prod = nalgebra::DMatrix::<f64>::identity(6, 6);
        for j in 1..=25 {
            let s = j as f64 / 25.0;
            prod *= reset.entries() * (1.0 - s) + shift.entries() * s;
        }
        let bound = 1.0 - (21..=25).map(|j| j as f64 / 25.0).product::<f64>();
        for start in 0..6 {
            let out =
                evolve_discrete(&spec, &Distribution::point_mass(6, start).unwrap(), 25).unwrap();
            let direct: Vec<f64> = prod.row(start).iter().copied().collect();
            assert!(crate::markov::tv_weights(out.weights(), &direct) < 1e-14);
            let tv = tv_distance(&out, spec.final_stationary()).unwrap();
            assert!(tv >= bound - 1e-12, "start {start}: {tv} < {bound}");
        }
    }

    fn homogeneous_continuous() -> (Generator, AdiabaticSpec) {
        let q = Generator::from_rows(&[
            vec![-1.0, 0.7, 0.3],
            vec![0.2, -0.5, 0.3],
            vec![1.1, 0.4, -1.5],
        ])
        .unwrap();
        let spec = AdiabaticSpec::continuous(
            q.clone(),
            q.clone(),
            ScheduleFamily::default(),
            RateBound::new(2.0).unwrap(),
        )
        .unwrap();
        (q, spec)
    }

    #[test]
    fn homogeneous_continuous_matches_uniformization() {
        let (q, spec) = homogeneous_continuous();
        let nu = dist(&[0.6, 0.4, 0.0]);
        let out = evolve_continuous(&spec, &nu, 3.7, 1e-10).unwrap();
        let expect =
            transient_distribution(&nu, &q, 3.7, RateBound::new(2.0).unwrap(), 1e-14).unwrap();
        assert!(tv_distance(&out, &expect).unwrap() < 1e-10);
        let tiny = evolve_continuous(&spec, &nu, 1e-12, 1e-10).unwrap();
        assert!(tv_distance(&tiny, &nu).unwrap() < 1e-11);
    }

    #[test]
    fn shift_continuous_matches_piecewise_oracle() {
        let spec = shift_continuous(6, ScheduleFamily::default()).unwrap();
        for start in [0, 3, 6] {
            let nu = Distribution::point_mass(7, start).unwrap();
            let rk = evolve_continuous(&spec, &nu, 100.0, 1e-9).unwrap();
            let pw = evolve_piecewise_uniformization(&spec, &nu, 100.0, 10_000, 1e-13).unwrap();
            assert!(tv_distance(&rk, &pw).unwrap() < 1e-6);
        }
    }

    #[test]
    fn mixing_time_examples() {
        let (_, shift) = shift_matrices(7).unwrap();
        for eps in [0.01, 0.5, 0.99] {
            let t = mixing_time(
                &Kernel::Discrete(shift.clone()),
                eps,
                &MixingOptions::default(),
            )
            .unwrap();
            assert_eq!(t, 7.0);
        }
        let rank_one = StochasticMatrix::from_rows(&[vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
        assert_eq!(
            mixing_time(&Kernel::Discrete(rank_one), 0.1, &MixingOptions::default()).unwrap(),
            1.0
        );

        // lazy symmetric chain: tv from a point mass is 0.5 * 0.5^t
        let lazy = StochasticMatrix::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let oracle = (1..).find(|&t| 0.5 * 0.5f64.powi(t) <= 0.01).unwrap();
        let t = mixing_time(&Kernel::Discrete(lazy), 0.01, &MixingOptions::default()).unwrap();
        assert_eq!(t, f64::from(oracle));

        assert!(matches!(
            mixing_time(
                &Kernel::Discrete(StochasticMatrix::identity(2).unwrap()),
                0.1,
                &MixingOptions::default()
            ),
            Err(Error::NonUniqueStationary { .. })
        ));
        let slow =
            StochasticMatrix::from_rows(&[vec![1.0 - 1e-9, 1e-9], vec![1e-9, 1.0 - 1e-9]]).unwrap();
        let capped = MixingOptions {
            cap: 100.0,
            ..MixingOptions::default()
        };
        assert!(matches!(
            mixing_time(&Kernel::Discrete(slow), 0.1, &capped),
            Err(Error::MixingTimeout { .. })
        ));
    }

    #[test]
    fn continuous_mixing_time_two_state() {
        // symmetric rates 1: tv(t) = 0.5 e^{-2t}
        let q = Generator::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let t = mixing_time(&Kernel::Continuous(q), 0.05, &MixingOptions::default()).unwrap();
        let exact = (0.1f64).ln() / -2.0;
        assert!(t >= exact && t <= exact * (1.0 + 1.1e-3), "{t} vs {exact}");
    }

    #[test]
    fn continuous_mixing_with_absorbing_state() {
        // from 0 the chain is absorbed at 2 after two rate-1 jumps:
        // tv(t) = P(Gamma(2, 1) > t) = (1 + t) e^{-t}
        let q = Generator::from_rows(&[
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let t = mixing_time(&Kernel::Continuous(q), 0.1, &MixingOptions::default()).unwrap();
        let tail = |t: f64| (1.0 + t) * (-t).exp();
        assert!(tail(t) <= 0.1 && tail(t * (1.0 - 1.1e-3)) > 0.1, "{t}");
    }

    #[test]
    fn search_on_homogeneous_spec_returns_mixing_time() {
        let (a, _) = pair();
        let spec =
            AdiabaticSpec::discrete(a.clone(), a.clone(), ScheduleFamily::default()).unwrap();
        let t_mix = mixing_time(&Kernel::Discrete(a), 0.01, &MixingOptions::default()).unwrap();
        let r = adiabatic_time(&spec, 0.01, &SearchOptions::default()).unwrap();
        assert_eq!(r.measured_time, t_mix);
        assert!(r.worst_case_tv <= 0.01);
        assert!(!r.monotonicity_flag);
    }

    #[test]
    fn shift_search_lies_between_bounds() {
        let spec = shift_discrete(20, ScheduleFamily::default()).unwrap();
        let r = adiabatic_time(&spec, 0.05, &SearchOptions::default()).unwrap();
        let lower = 400.0 / (4.0 * -(0.95f64).ln());
        assert!(
            r.measured_time >= lower && r.measured_time <= 400.0 / 0.05,
            "{r:?}"
        );
        // least passing horizon: one step less fails
        let below = worst_case(&spec, r.measured_time - 1.0, &StartSet::All, DEFAULT_TOL).unwrap();
        assert!(below.worst_case_tv > 0.05);
        assert_eq!(r.initial_horizon, 20.0);
        assert!(r.tv_at_double <= 0.05);
    }

    #[test]
    fn search_timeout() {
        let spec = shift_discrete(20, ScheduleFamily::default()).unwrap();
        let opts = SearchOptions {
            cap: 500.0,
            ..SearchOptions::default()
        };
        assert!(matches!(
            adiabatic_time(&spec, 0.05, &opts),
            Err(Error::SearchTimeout { .. })
        ));
    }

    #[test]
    fn deviation_vanishes_at_equilibrium() {
        let (a, _) = pair();
        let spec = AdiabaticSpec::discrete(a.clone(), a, ScheduleFamily::default()).unwrap();
        let d = trajectory_deviation(&spec, 50.0, 11, DEFAULT_TOL).unwrap();
        assert!(d.sup_deviation < 1e-10);
        assert_eq!(d.profile.len(), 11);
        assert_eq!(d.profile[10].0, 50.0);
    }

    #[test]
    fn deviation_reports_non_unique_point() {
        let (a, _) = pair();
        let spec = AdiabaticSpec::discrete(
            StochasticMatrix::identity(3).unwrap(),
            a,
            ScheduleFamily::default(),
        )
        .unwrap();
        assert!(matches!(
            trajectory_deviation(&spec, 10.0, 5, DEFAULT_TOL),
            Err(Error::NonUniqueStationary { at: Some(s), .. }) if s == 0.0
        ));
    }

    #[test]
    fn zero_generators_never_jump() {
        let z = Generator::zero(3).unwrap();
        let one = Generator::from_rows(&[
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let spec = AdiabaticSpec::continuous(
            z.clone(),
            one,
            ScheduleFamily::default(),
            RateBound::new(0.0).unwrap(),
        );
        // the rate bound does not certify the final generator
        assert!(spec.is_err());
        let q = Generator::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let still = AdiabaticSpec::continuous(
            Generator::zero(2).unwrap(),
            q,
            ScheduleFamily::builder(
                crate::schedule::Schedule::custom("off", |s| if s < 1.0 { 0.0 } else { 1.0 })
                    .unwrap(),
            )
            .build()
            .unwrap(),
            RateBound::new(1.0).unwrap(),
        )
        .unwrap();
        let path = sample_path(&still, 1, 100.0, 7).unwrap();
        assert_eq!(path.final_state, 1);
        assert!(path.event_times.is_empty());
    }

    #[test]
    fn sample_paths_are_reproducible_and_ordered() {
        let spec = shift_continuous(6, ScheduleFamily::default()).unwrap();
        let a = sample_path(&spec, 3, 50.0, 11).unwrap();
        let b = sample_path(&spec, 3, 50.0, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.event_times.windows(2).all(|w| w[0] < w[1]));
        assert!(a.event_times.iter().all(|&t| t > 0.0 && t <= 50.0));
        let c = sample_final_counts(&spec, 0, 50.0, 100, 5).unwrap();
        assert_eq!(c, sample_final_counts(&spec, 0, 50.0, 100, 5).unwrap());
        assert_eq!(c.iter().sum::<u64>(), 100);
        let first = sample_final_counts(&spec, 0, 50.0, 1, 5).unwrap();
        assert_eq!(
            first[sample_path(&spec, 0, 50.0, 5).unwrap().final_state],
            1
        );
        assert_ne!(c, sample_final_counts(&spec, 0, 50.0, 100, 4).unwrap());
    }
}
