//! Finite-state Markov chain primitives: distributions, transition kernels,
//! rate generators, total variation distance, stationary solves and
//! homogeneous evolution.
//!
//! Distributions are row vectors and act on kernels from the left, so a
//! single step is `mu * P` and continuous evolution is `mu * exp(t Q)`.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, poisson_weights};
use crate::sparse::SparseRows;

/// Tolerance on row sums and total mass for validated inputs.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Looser tolerance applied to vectors produced by long chains of
/// floating-point products before they are wrapped as a [`Distribution`].
pub(crate) const DRIFT_TOL: f64 = 1e-9;

/// Probability vector over a finite state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct Distribution {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    weights: Vec<f64>,
}

impl TryFrom<DistributionRepr> for Distribution {
    type Error = Error;
    fn try_from(r: DistributionRepr) -> Result<Self> {
        Distribution::new(r.weights)
    }
}

impl From<Distribution> for DistributionRepr {
    fn from(d: Distribution) -> Self {
        DistributionRepr { weights: d.weights }
    }
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!("weight {i} is {w}")));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Ok(Distribution { weights })
    }

    /// Wraps a vector produced by exact evolution. Rounding-level negative
    /// entries are clamped and the mass is rescaled; anything larger than
    /// [`DRIFT_TOL`] is reported as an error.
    pub(crate) fn from_evolved(mut weights: Vec<f64>) -> Result<Self> {
        let mut min = 0.0f64;
        for w in weights.iter_mut() {
            if !w.is_finite() {
                return Err(Error::NumericalDrift("non-finite weight".into()));
            }
            if *w < 0.0 {
                min = min.min(*w);
                *w = 0.0;
            }
        }
        if min < -DRIFT_TOL {
            return Err(Error::NumericalDrift(format!("negative weight {min:e}")));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > DRIFT_TOL {
            return Err(Error::NumericalDrift(format!("total mass {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Distribution { weights })
    }

    pub fn point_mass(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::InvalidDistribution(format!(
                "state {state} outside 0..{n}"
            )));
        }
        let mut weights = vec![0.0; n];
        weights[state] = 1.0;
        Ok(Distribution { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty state space".into()));
        }
        Ok(Distribution {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

/// Exchange format for matrices: `{ "dim": n, "rows": [[...], ...] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixRepr {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixRepr {
    fn into_dense(self) -> Result<DMatrix<f64>> {
        if self.rows.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self.rows.len(),
            });
        }
        for row in &self.rows {
            if row.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: row.len(),
                });
            }
        }
        let flat: Vec<f64> = self.rows.into_iter().flatten().collect();
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &flat))
    }

    fn from_dense(m: &DMatrix<f64>) -> Self {
        MatrixRepr {
            dim: m.nrows(),
            rows: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

/// Row-stochastic transition matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl TryFrom<MatrixRepr> for StochasticMatrix {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        StochasticMatrix::new(r.into_dense()?)
    }
}

impl From<StochasticMatrix> for MatrixRepr {
    fn from(m: StochasticMatrix) -> Self {
        MatrixRepr::from_dense(&m.entries)
    }
}

impl StochasticMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::validated(entries, VALIDATION_TOL)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        MatrixRepr {
            dim: rows.len(),
            rows: rows.to_vec(),
        }
        .try_into()
    }

    pub(crate) fn validated(entries: DMatrix<f64>, row_tol: f64) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidStochasticMatrix(format!(
                "shape {}x{} is not square and non-empty",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidStochasticMatrix(format!(
                        "entry ({i}, {j}) = {v}"
                    )));
                }
            }
            let sum: f64 = entries.row(i).iter().sum();
            if (sum - 1.0).abs() > row_tol {
                return Err(Error::InvalidStochasticMatrix(format!(
                    "row {i} sums to {sum}"
                )));
            }
        }
        Ok(StochasticMatrix { entries })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub(crate) fn to_sparse(&self) -> SparseRows {
        SparseRows::from_dense(&self.entries)
    }

    /// Unique stationary distribution, see [`stationary_distribution`].
    pub fn stationary(&self, tol: f64) -> Result<Distribution> {
        let operator = self.entries.transpose() - DMatrix::identity(self.dim(), self.dim());
        solve_stationary(operator, tol, |pi| {
            let next = step_weights(pi, &self.entries);
            next.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
        })
    }
}

/// Rate matrix of a continuous-time chain: nonnegative off-diagonal rates,
/// rows summing to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Generator {
    entries: DMatrix<f64>,
}

impl TryFrom<MatrixRepr> for Generator {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        Generator::new(r.into_dense()?)
    }
}

impl From<Generator> for MatrixRepr {
    fn from(q: Generator) -> Self {
        MatrixRepr::from_dense(&q.entries)
    }
}

impl Generator {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidGenerator(format!(
                "shape {}x{} is not square and non-empty",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidGenerator(format!("entry ({i}, {j}) = {v}")));
                }
                if i != j {
                    if v < 0.0 {
                        return Err(Error::InvalidGenerator(format!(
                            "negative rate {v} at ({i}, {j})"
                        )));
                    }
                    off += v;
                }
            }
            let sum = off + entries[(i, i)];
            if sum.abs() > VALIDATION_TOL * off.max(1.0) {
                return Err(Error::InvalidGenerator(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Generator { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        MatrixRepr {
            dim: rows.len(),
            rows: rows.to_vec(),
        }
        .try_into()
    }

    /// Builds a generator from off-diagonal rates; the diagonal of `rates` is
    /// ignored and replaced by the negative off-diagonal row sum.
    pub fn from_off_diagonal(mut rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        if rates.ncols() != n {
            return Err(Error::InvalidGenerator("rate matrix is not square".into()));
        }
        for i in 0..n {
            rates[(i, i)] = 0.0;
            let off: f64 = rates.row(i).iter().sum();
            rates[(i, i)] = -off;
        }
        Generator::new(rates)
    }

    pub fn zero(n: usize) -> Result<Self> {
        Generator::new(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.entries[(i, i)]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.exit_rate(i))
            .fold(0.0, f64::max)
    }

    /// `factor * Q`; `factor` must be positive.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!("scale factor {factor}")));
        }
        Ok(Generator {
            entries: &self.entries * factor,
        })
    }

    pub(crate) fn to_sparse(&self) -> SparseRows {
        SparseRows::from_dense(&self.entries)
    }

    /// Sparse view of the uniformized kernel `I + Q / lambda`.
    pub(crate) fn uniformized(&self, lambda: f64) -> SparseRows {
        self.to_sparse().uniformized(lambda)
    }

    pub fn stationary(&self, tol: f64) -> Result<Distribution> {
        let operator = self.entries.transpose();
        solve_stationary(operator, tol, |pi| {
            let flow = step_weights(pi, &self.entries);
            flow.iter().map(|x| x.abs()).sum()
        })
    }
}

/// Upper bound on the total exit rate of every generator it certifies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    lambda: f64,
}

impl RateBound {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("rate bound {lambda}")));
        }
        Ok(RateBound { lambda })
    }

    /// The tightest bound for `q`: its maximal exit rate.
    pub fn for_generator(q: &Generator) -> Self {
        RateBound {
            lambda: q.max_exit_rate(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn certifies(&self, q: &Generator) -> bool {
        self.check(q).is_ok()
    }

    pub fn check(&self, q: &Generator) -> Result<()> {
        let required = q.max_exit_rate();
        if required > self.lambda * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidRateBound {
                lambda: self.lambda,
                required,
            });
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        RateBound::new(self.lambda * factor)
    }
}

/// Either flavour of one-step dynamics.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    Discrete(StochasticMatrix),
    Continuous(Generator),
}

impl Kernel {
    pub fn dim(&self) -> usize {
        match self {
            Kernel::Discrete(p) => p.dim(),
            Kernel::Continuous(q) => q.dim(),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        match self {
            Kernel::Discrete(p) => p.entries(),
            Kernel::Continuous(q) => q.entries(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Kernel::Discrete(_))
    }
}

impl From<StochasticMatrix> for Kernel {
    fn from(p: StochasticMatrix) -> Self {
        Kernel::Discrete(p)
    }
}

impl From<Generator> for Kernel {
    fn from(q: Generator) -> Self {
        Kernel::Continuous(q)
    }
}

/// Half the L1 distance between two distributions.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: nu.len(),
        });
    }
    Ok(tv_weights(mu.weights(), nu.weights()))
}

pub(crate) fn tv_weights(a: &[f64], b: &[f64]) -> f64 {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    (0.5 * pairwise_sum(&diffs)).min(1.0)
}

/// Unique stationary distribution of a kernel.
///
/// Uniqueness is decided by the numerical rank of `(P - I)^T` (resp. `Q^T`)
/// with threshold `1e-10 * ||A||_2`; the solve replaces one balance
/// equation with the normalisation row, which is nonsingular exactly when
/// the null space is one-dimensional.
pub fn stationary_distribution(kernel: &Kernel, tol: f64) -> Result<Distribution> {
    match kernel {
        Kernel::Discrete(p) => p.stationary(tol),
        Kernel::Continuous(q) => q.stationary(tol),
    }
}

const RANK_THRESHOLD: f64 = 1e-10;

fn solve_stationary(
    operator: DMatrix<f64>,
    tol: f64,
    residual: impl Fn(&[f64]) -> f64,
) -> Result<Distribution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol}")));
    }
    let n = operator.nrows();
    let singular = SVD::new(operator.clone(), false, false).singular_values;
    let norm = singular.iter().copied().fold(0.0, f64::max);
    let nullity = singular
        .iter()
        .filter(|&&s| s <= RANK_THRESHOLD * norm)
        .count();
    if nullity > 1 {
        return Err(Error::NonUniqueStationary { nullity, at: None });
    }

    let mut system = operator;
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = system.clone().lu();
    let mut pi = lu.solve(&rhs).ok_or(Error::StationarySolve {
        residual: f64::INFINITY,
    })?;
    // one round of iterative refinement
    let r = &rhs - &system * &pi;
    if let Some(delta) = lu.solve(&r) {
        pi += delta;
    }

    let mut weights: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::StationarySolve {
            residual: f64::INFINITY,
        });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let res = residual(&weights);
    if !(res <= tol) {
        return Err(Error::StationarySolve { residual: res });
    }
    Ok(Distribution { weights })
}

fn step_weights(mu: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.ncols();
    let mut out = vec![0.0; n];
    for (i, &w) in mu.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += w * m[(i, j)];
        }
    }
    out
}

/// One step `mu * P`.
pub fn step_distribution(mu: &Distribution, p: &StochasticMatrix) -> Result<Distribution> {
    if mu.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: mu.len(),
        });
    }
    Distribution::from_evolved(step_weights(mu.weights(), p.entries()))
}

/// Largest `lambda * t` handled by a single Poisson series.
const MAX_SINGLE_SERIES: f64 = 700.0;
/// Segment length (in units of `1 / lambda`) once the horizon is split.
const SEGMENT_MEAN: f64 = 50.0;

/// `mu * exp(t Q)` by uniformization: a Poisson(`lambda t`) mixture of powers
/// of `I + Q / lambda`, truncated once the certified tail mass drops below
/// `tol`.
pub fn transient_distribution(
    mu: &Distribution,
    q: &Generator,
    t: f64,
    lambda: RateBound,
    tol: f64,
) -> Result<Distribution> {
    if mu.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: mu.len(),
        });
    }
    let mut block = mu.weights().to_vec();
    uniformize_block(q, &mut block, t, lambda, tol)?;
    Distribution::from_evolved(block)
}

/// In-place `block * exp(t Q)` for a row-major block of row vectors.
pub(crate) fn uniformize_block(
    q: &Generator,
    block: &mut [f64],
    t: f64,
    lambda: RateBound,
    tol: f64,
) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol}")));
    }
    lambda.check(q)?;
    let rate = lambda.lambda();
    if t == 0.0 || rate == 0.0 {
        return Ok(());
    }
    let p1 = q.uniformized(rate);
    poisson_mixture(&p1, rate, block, t, tol);
    Ok(())
}

/// `block * sum_k Poisson(rate t; k) p1^k`, the uniformized semigroup for a
/// fixed uniformized kernel `p1 = I + Q / rate`.
pub(crate) fn poisson_mixture(p1: &SparseRows, rate: f64, block: &mut [f64], t: f64, tol: f64) {
    if t == 0.0 || rate == 0.0 {
        return;
    }
    let total_mean = rate * t;
    let segments = if total_mean > MAX_SINGLE_SERIES {
        (total_mean / SEGMENT_MEAN).ceil() as usize
    } else {
        1
    };
    let weights = poisson_weights(total_mean / segments as f64, tol / segments as f64);
    let kept: f64 = weights.iter().sum();
    let mut power = vec![0.0; block.len()];
    let mut scratch = vec![0.0; block.len()];
    for _ in 0..segments {
        power.copy_from_slice(block);
        block
            .iter_mut()
            .zip(&power)
            .for_each(|(b, p)| *b = weights[0] * p);
        for &w in &weights[1..] {
            p1.left_mul_block(&power, &mut scratch);
            std::mem::swap(&mut power, &mut scratch);
            block.iter_mut().zip(&power).for_each(|(b, p)| *b += w * p);
        }
        block.iter_mut().for_each(|b| *b /= kept);
    }
}
