//! Ising model on the torus `Z^d / nZ^d` with Glauber (heat-bath) dynamics:
//! each site carries a rate-1 clock and, when it rings, its spin is redrawn
//! from the conditional Gibbs law given its neighbours.
//!
//! Configurations are indexed site-major: bit `j` of the index is the spin
//! of site `j`, with `1` meaning `+1`. Sites are numbered in mixed radix
//! `n` with the first coordinate least significant.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::StartSet;
use crate::error::{Error, Result};
use crate::interpolation::AdiabaticSpec;
use crate::markov::{Distribution, Generator, RateBound};
use crate::schedule::{Schedule, ScheduleFamily};

/// Largest number of sites whose configurations are enumerated (`2^12`
/// states).
pub const MAX_SITES: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusLattice {
    n: usize,
    d: usize,
    neighbors: Vec<Vec<usize>>,
}

impl TorusLattice {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidLattice(format!(
                "side length {n} < 3 gives repeated neighbours"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidLattice("dimension must be >= 1".into()));
        }
        let sites = u32::try_from(d)
            .ok()
            .and_then(|d| n.checked_pow(d))
            .ok_or_else(|| Error::InvalidLattice(format!("{n}^{d} sites overflow")))?;
        if sites > 1 << 24 {
            return Err(Error::InvalidLattice(format!(
                "{sites} sites is too many to index"
            )));
        }
        let mut neighbors = Vec::with_capacity(sites);
        for j in 0..sites {
            let coords = coords_of(j, n, d);
            let mut adj = Vec::with_capacity(2 * d);
            for axis in 0..d {
                for step in [1, n - 1] {
                    let mut c = coords.clone();
                    c[axis] = (c[axis] + step) % n;
                    adj.push(site_of(&c, n));
                }
            }
            neighbors.push(adj);
        }
        Ok(TorusLattice { n, d, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sites(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    /// Each nearest-neighbour pair once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, adj) in self.neighbors.iter().enumerate() {
            for &j in adj {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn coords(&self, j: usize) -> Vec<usize> {
        coords_of(j, self.n, self.d)
    }

    /// Number of spin configurations, if within the enumeration cap.
    pub fn configurations(&self) -> Result<usize> {
        if self.sites() > MAX_SITES {
            return Err(Error::EnumerationCapExceeded {
                sites: self.sites(),
                cap: MAX_SITES,
            });
        }
        Ok(1 << self.sites())
    }

    /// Site permutations generated by translations, axis permutations and
    /// axis reflections.
    fn automorphisms(&self) -> Vec<Vec<usize>> {
        let (n, d) = (self.n, self.d);
        let mut axis_orders = Vec::new();
        permutations(&mut (0..d).collect(), 0, &mut axis_orders);
        let mut maps = Vec::new();
        for order in &axis_orders {
            for reflect in 0..(1usize << d) {
                for shift in 0..self.sites() {
                    let offset = coords_of(shift, n, d);
                    let map = (0..self.sites())
                        .map(|j| {
                            let c = coords_of(j, n, d);
                            let image: Vec<usize> = (0..d)
                                .map(|axis| {
                                    let v = c[order[axis]];
                                    let v = if reflect >> axis & 1 == 1 {
                                        (n - v) % n
                                    } else {
                                        v
                                    };
                                    (v + offset[axis]) % n
                                })
                                .collect();
                            site_of(&image, n)
                        })
                        .collect();
                    maps.push(map);
                }
            }
        }
        maps
    }
}

fn coords_of(mut j: usize, n: usize, d: usize) -> Vec<usize> {
    let mut c = Vec::with_capacity(d);
    for _ in 0..d {
        c.push(j % n);
        j /= n;
    }
    c
}

fn site_of(coords: &[usize], n: usize) -> usize {
    coords.iter().rev().fold(0, |acc, &c| acc * n + c)
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!("spin value {bad}")));
        }
        Ok(SpinConfig { spins })
    }

    pub fn all_plus(sites: usize) -> Self {
        SpinConfig {
            spins: vec![1; sites],
        }
    }

    pub fn from_index(index: usize, sites: usize) -> Self {
        SpinConfig {
            spins: (0..sites)
                .map(|j| if index >> j & 1 == 1 { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0, |acc, (j, _)| acc | 1 << j)
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, j: usize) -> i8 {
        self.spins[j]
    }

    pub fn flipped(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.spins[j] = -out.spins[j];
        out
    }

    pub fn negated(&self) -> Self {
        SpinConfig {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    /// `'1'` for `+1`, site 0 first.
    pub fn bitstring(&self) -> String {
        self.spins
            .iter()
            .map(|&s| if s == 1 { '1' } else { '0' })
            .collect()
    }
}

/// Bitstring of configuration `index` on `sites` sites, site 0 first.
pub fn bitstring(index: usize, sites: usize) -> String {
    SpinConfig::from_index(index, sites).bitstring()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Initial,
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    beta: f64,
    role: Role,
}

impl IsingParams {
    pub fn new(beta: f64, role: Role) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta {beta}")));
        }
        Ok(IsingParams { beta, role })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

fn check_config(x: &SpinConfig, lattice: &TorusLattice) -> Result<()> {
    if x.spins.len() != lattice.sites() {
        return Err(Error::DimensionMismatch {
            expected: lattice.sites(),
            found: x.spins.len(),
        });
    }
    Ok(())
}

fn check_site(j: usize, lattice: &TorusLattice) -> Result<()> {
    if j >= lattice.sites() {
        return Err(Error::InvalidArgument(format!(
            "site {j} outside 0..{}",
            lattice.sites()
        )));
    }
    Ok(())
}

pub fn neighbor_sum(x: &SpinConfig, j: usize, lattice: &TorusLattice) -> i32 {
    lattice
        .neighbors(j)
        .iter()
        .map(|&i| i32::from(x.spins[i]))
        .sum()
}

/// `-beta * sum over edges of x(i) x(j)`.
pub fn hamiltonian(x: &SpinConfig, lattice: &TorusLattice, params: &IsingParams) -> Result<f64> {
    check_config(x, lattice)?;
    let aligned: i64 = lattice
        .edges()
        .iter()
        .map(|&(i, j)| i64::from(x.spins[i] * x.spins[j]))
        .sum();
    Ok(-params.beta * aligned as f64)
}

/// `-beta * x(j) * (sum of neighbour spins)`.
pub fn local_hamiltonian(
    x: &SpinConfig,
    j: usize,
    lattice: &TorusLattice,
    params: &IsingParams,
) -> Result<f64> {
    check_config(x, lattice)?;
    check_site(j, lattice)?;
    Ok(-params.beta * f64::from(x.spin(j)) * f64::from(neighbor_sum(x, j, lattice)))
}

/// Probability that a redrawn spin at `j` is `+1`; uses the identity
/// `e^a / (e^a + e^-a) = (1 + tanh a) / 2` with `a = beta * neighbour sum`.
pub fn flip_probability(
    x: &SpinConfig,
    j: usize,
    lattice: &TorusLattice,
    params: &IsingParams,
) -> Result<f64> {
    check_config(x, lattice)?;
    check_site(j, lattice)?;
    Ok(plus_probability(params.beta, neighbor_sum(x, j, lattice)))
}

fn plus_probability(beta: f64, field: i32) -> f64 {
    0.5 * (1.0 + (beta * f64::from(field)).tanh())
}

/// Rate of flipping spin `spin` under local field `field`.
fn flip_rate(beta: f64, spin: i8, field: i32) -> f64 {
    0.5 * (1.0 - f64::from(spin) * (beta * f64::from(field)).tanh())
}

/// Gibbs measure `exp(-H) / Z`, normalised in log space.
pub fn gibbs_distribution(lattice: &TorusLattice, params: &IsingParams) -> Result<Distribution> {
    let count = lattice.configurations()?;
    let sites = lattice.sites();
    let log_weights: Vec<f64> = (0..count)
        .map(|k| -hamiltonian(&SpinConfig::from_index(k, sites), lattice, params).unwrap())
        .collect();
    let top = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - top).exp()).collect();
    let z: f64 = crate::numeric::pairwise_sum(&weights);
    Distribution::new(weights.into_iter().map(|w| w / z).collect())
}

/// Heat-bath generator with one rate-1 clock per site.
pub fn glauber_generator(lattice: &TorusLattice, params: &IsingParams) -> Result<Generator> {
    glauber_generator_at(lattice, params.beta)
}

fn glauber_generator_at(lattice: &TorusLattice, beta: f64) -> Result<Generator> {
    let count = lattice.configurations()?;
    let sites = lattice.sites();
    let mut rates = DMatrix::zeros(count, count);
    for k in 0..count {
        let x = SpinConfig::from_index(k, sites);
        for j in 0..sites {
            rates[(k, k ^ (1 << j))] = flip_rate(beta, x.spin(j), neighbor_sum(&x, j, lattice));
        }
    }
    Generator::from_off_diagonal(rates)
}

/// Generator built directly from the interpolated local energy
/// `(1 - s) H_initial + s H_final`, i.e. heat-bath rates at
/// `beta = (1 - s) beta1 + s beta2`, with every softmax evaluated from
/// exponentials. Independent of the schedule machinery.
pub fn interpolated_glauber_generator(
    lattice: &TorusLattice,
    beta1: f64,
    beta2: f64,
    s: f64,
) -> Result<Generator> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfDomain(s));
    }
    let count = lattice.configurations()?;
    let sites = lattice.sites();
    let mut rates = DMatrix::zeros(count, count);
    for k in 0..count {
        let x = SpinConfig::from_index(k, sites);
        for j in 0..sites {
            let field = f64::from(neighbor_sum(&x, j, lattice));
            let energy =
                |spin: f64| (1.0 - s) * (-beta1 * spin * field) + s * (-beta2 * spin * field);
            let (up, down) = ((-energy(1.0)).exp(), (-energy(-1.0)).exp());
            let p_plus = up / (up + down);
            rates[(k, k ^ (1 << j))] = if x.spin(j) == 1 { 1.0 - p_plus } else { p_plus };
        }
    }
    Generator::from_off_diagonal(rates)
}

/// Closed-form schedule for transitions whose local field has magnitude `a`.
#[derive(Clone, Debug)]
pub struct GlauberSchedule {
    pub schedule: Schedule,
    /// Set when the rates do not change (`a = 0` or `beta1 = beta2`) and
    /// the linear schedule stands in.
    pub degenerate: bool,
}

pub fn adiabatic_glauber_schedule(a: f64, beta1: f64, beta2: f64) -> Result<GlauberSchedule> {
    if a == 0.0 || beta1 == beta2 {
        return Ok(GlauberSchedule {
            schedule: Schedule::linear(),
            degenerate: true,
        });
    }
    Ok(GlauberSchedule {
        schedule: Schedule::glauber(a.abs(), beta1, beta2)?,
        degenerate: false,
    })
}

/// Recovers the schedule of a field-`a` transition by inverting the
/// interpolation rule `q[s] = (1 - phi) q_initial + phi q_final`, with the
/// three rates computed from the interpolated local energy.
pub fn derive_schedule_oracle(a: f64, beta1: f64, beta2: f64, s: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::DegenerateClass(
            "neighbour sum 0 gives equal rates".into(),
        ));
    }
    if beta1 == beta2 {
        return Err(Error::DegenerateClass(
            "beta1 = beta2 gives equal rates".into(),
        ));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfDomain(s));
    }
    // a spin +1 under field a; flipping it to -1
    let rate = |local_plus: f64| {
        // local_plus is H_loc of the +1 state; the -1 state has the opposite energy
        let (up, down) = ((-local_plus).exp(), local_plus.exp());
        down / (up + down)
    };
    let q_initial = rate(-beta1 * a);
    let q_final = rate(-beta2 * a);
    let q_s = rate((1.0 - s) * (-beta1 * a) + s * (-beta2 * a));
    Ok((q_s - q_initial) / (q_final - q_initial))
}

/// `lambda = n^d * per_site_rate`.
pub fn torus_rate_bound(lattice: &TorusLattice, per_site_rate: f64) -> Result<RateBound> {
    if !(per_site_rate > 0.0) || !per_site_rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "per-site rate {per_site_rate}"
        )));
    }
    RateBound::new(lattice.sites() as f64 * per_site_rate)
}

/// Interpolation from heat-bath dynamics at `beta1` to `beta2`, with each
/// flip assigned the closed-form schedule of its field class and
/// `lambda = n^d`.
pub fn build_adiabatic_glauber_spec(
    lattice: &TorusLattice,
    beta1: f64,
    beta2: f64,
) -> Result<AdiabaticSpec> {
    build_adiabatic_glauber_spec_with_rate(lattice, beta1, beta2, 1.0)
}

/// As [`build_adiabatic_glauber_spec`] with every site clock running at
/// `per_site_rate`.
pub fn build_adiabatic_glauber_spec_with_rate(
    lattice: &TorusLattice,
    beta1: f64,
    beta2: f64,
    per_site_rate: f64,
) -> Result<AdiabaticSpec> {
    let initial = IsingParams::new(beta1, Role::Initial)?;
    let fin = IsingParams::new(beta2, Role::Final)?;
    let bound = torus_rate_bound(lattice, per_site_rate)?;
    let mut q_initial = glauber_generator(lattice, &initial)?;
    let mut q_final = glauber_generator(lattice, &fin)?;
    if per_site_rate != 1.0 {
        q_initial = q_initial.scaled(per_site_rate)?;
        q_final = q_final.scaled(per_site_rate)?;
    }

    let mut builder = ScheduleFamily::builder(Schedule::linear());
    if beta1 != beta2 {
        // field magnitudes 2, 4, ..., 2d; odd counts of neighbours never occur
        let classes: Vec<usize> = (1..=lattice.d())
            .map(|k| {
                builder.add(
                    adiabatic_glauber_schedule(2.0 * k as f64, beta1, beta2)
                        .unwrap()
                        .schedule,
                )
            })
            .collect();
        let sites = lattice.sites();
        for k in 0..lattice.configurations()? {
            let x = SpinConfig::from_index(k, sites);
            for j in 0..sites {
                let field = neighbor_sum(&x, j, lattice).unsigned_abs() as usize;
                if field > 0 {
                    builder.assign(k, k ^ (1 << j), classes[field / 2 - 1]);
                }
            }
        }
    }
    AdiabaticSpec::continuous(q_initial, q_final, builder.build()?, bound)
}

/// One configuration per orbit of the symmetry group of the torus
/// (translations, axis permutations and reflections) combined with the
/// global spin flip. Heat-bath dynamics, their Gibbs measures and the
/// schedule assignment are invariant under this group, so a worst case
/// over all point masses is attained on these representatives.
pub fn symmetry_representatives(lattice: &TorusLattice) -> Result<Vec<usize>> {
    let count = lattice.configurations()?;
    let sites = lattice.sites();
    let maps = lattice.automorphisms();
    let full = count - 1;
    let mut reps = BTreeSet::new();
    for k in 0..count {
        let mut best = usize::MAX;
        for map in &maps {
            let mut image = 0usize;
            for (j, &target) in map.iter().enumerate() {
                image |= (k >> j & 1) << target;
            }
            best = best.min(image).min(image ^ full);
        }
        debug_assert!(sites <= MAX_SITES);
        reps.insert(best);
    }
    Ok(reps.into_iter().collect())
}

pub fn symmetry_start_set(lattice: &TorusLattice) -> Result<StartSet> {
    symmetry_representatives(lattice).map(StartSet::States)
}

/// Config-file description of a torus experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub n: usize,
    pub d: usize,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "unit_rate")]
    pub per_site_rate: f64,
}

fn unit_rate() -> f64 {
    1.0
}

impl TorusSpec {
    pub fn lattice(&self) -> Result<TorusLattice> {
        TorusLattice::new(self.n, self.d)
    }

    pub fn build(&self) -> Result<AdiabaticSpec> {
        build_adiabatic_glauber_spec_with_rate(
            &self.lattice()?,
            self.beta1,
            self.beta2,
            self.per_site_rate,
        )
    }
}
