//! Time-inhomogeneous chains interpolating between an initial and a final
//! kernel, entry by entry, along a family of schedules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::markov::{Distribution, Generator, Kernel, RateBound, StochasticMatrix};
use crate::schedule::{checked_flatness, grid, Flatness, Schedule, ScheduleFamily};
use crate::sparse::SparseRows;

/// Residual tolerance for the stationary solve of the final kernel.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Row-sum tolerance of interpolated stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub(crate) struct PatternEntry {
    pub col: usize,
    pub initial: f64,
    pub fin: f64,
    pub member: usize,
}

impl PatternEntry {
    #[inline]
    pub fn at(&self, phi: &[f64]) -> f64 {
        let w = phi[self.member];
        (1.0 - w) * self.initial + w * self.fin
    }

    fn active(&self) -> bool {
        self.initial != self.fin
    }
}

/// An interpolation problem: endpoint kernels, per-entry schedules and, in
/// continuous time, a uniformization rate bound.
#[derive(Clone, Debug)]
pub struct AdiabaticSpec {
    initial: Kernel,
    final_kernel: Kernel,
    family: ScheduleFamily,
    rate_bound: Option<RateBound>,
    final_stationary: Distribution,
    offsets: Vec<usize>,
    pattern: Vec<PatternEntry>,
    effective_min: Schedule,
    flatness: Option<Flatness>,
}

impl AdiabaticSpec {
    pub fn discrete(
        initial: StochasticMatrix,
        fin: StochasticMatrix,
        family: ScheduleFamily,
    ) -> Result<Self> {
        let spec = Self::build(initial.into(), fin.into(), family, None)?;
        if spec.family.members().len() > 1 {
            let mut phi = Vec::new();
            let mut rows = SparseRows::default();
            for s in grid() {
                spec.fill_at(s, &mut phi, &mut rows)?;
            }
        }
        Ok(spec)
    }

    pub fn continuous(
        initial: Generator,
        fin: Generator,
        family: ScheduleFamily,
        rate_bound: RateBound,
    ) -> Result<Self> {
        rate_bound.check(&initial)?;
        rate_bound.check(&fin)?;
        let spec = Self::build(initial.into(), fin.into(), family, Some(rate_bound))?;
        if spec.family.members().len() > 1 {
            // endpoint bounds do not control mixed rows, so check along the path
            let mut phi = Vec::new();
            for s in grid() {
                spec.family.values_at(s, &mut phi);
                let required = spec.max_exit_rate(&phi);
                if required > rate_bound.lambda() * (1.0 + 1e-12) {
                    return Err(Error::InvalidRateBound {
                        lambda: rate_bound.lambda(),
                        required,
                    });
                }
            }
        }
        Ok(spec)
    }

    fn build(
        initial: Kernel,
        final_kernel: Kernel,
        family: ScheduleFamily,
        rate_bound: Option<RateBound>,
    ) -> Result<Self> {
        let n = initial.dim();
        if final_kernel.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: final_kernel.dim(),
            });
        }
        for ((i, j), _) in family.assignments() {
            if i >= n || j >= n {
                return Err(Error::InvalidSchedule(format!(
                    "schedule assigned to entry ({i}, {j}) of a {n}-state chain"
                )));
            }
        }
        let final_stationary = match &final_kernel {
            Kernel::Discrete(p) => p.stationary(STATIONARY_TOL),
            Kernel::Continuous(q) => q.stationary(STATIONARY_TOL),
        }?;

        let discrete = initial.is_discrete();
        let (a, b) = (initial.entries(), final_kernel.entries());
        let mut offsets = vec![0];
        let mut pattern = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if !discrete && i == j {
                    continue;
                }
                let (x, y) = (a[(i, j)], b[(i, j)]);
                if x != 0.0 || y != 0.0 {
                    pattern.push(PatternEntry {
                        col: j,
                        initial: x,
                        fin: y,
                        member: family.member_index(i, j),
                    });
                }
            }
            offsets.push(pattern.len());
        }

        let mut active: Vec<usize> = pattern
            .iter()
            .filter(|e| e.active())
            .map(|e| e.member)
            .collect();
        active.sort_unstable();
        active.dedup();
        let (effective_min, flatness) =
            if active.is_empty() || active.len() == family.members().len() {
                (family.min_schedule().clone(), family.flatness())
            } else {
                let members = active
                    .iter()
                    .map(|&m| family.members()[m].clone())
                    .collect();
                let min = Schedule::min_of(members)?;
                let flatness = checked_flatness(&min)?;
                (min, flatness)
            };

        Ok(AdiabaticSpec {
            initial,
            final_kernel,
            family,
            rate_bound,
            final_stationary,
            offsets,
            pattern,
            effective_min,
            flatness,
        })
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn is_discrete(&self) -> bool {
        self.initial.is_discrete()
    }

    pub fn initial(&self) -> &Kernel {
        &self.initial
    }

    pub fn final_kernel(&self) -> &Kernel {
        &self.final_kernel
    }

    pub fn family(&self) -> &ScheduleFamily {
        &self.family
    }

    pub fn rate_bound(&self) -> Option<RateBound> {
        self.rate_bound
    }

    /// The rate bound of a continuous spec.
    pub(crate) fn require_rate_bound(&self) -> Result<RateBound> {
        self.rate_bound.ok_or(Error::ModeMismatch(
            "operation needs a continuous-time spec",
        ))
    }

    pub fn final_stationary(&self) -> &Distribution {
        &self.final_stationary
    }

    /// Pointwise minimum over the schedules of entries that actually change
    /// between the two kernels. Entries with equal endpoints do not depend
    /// on their schedule, so they are left out.
    pub fn min_schedule(&self) -> &Schedule {
        &self.effective_min
    }

    /// Flatness of [`Self::min_schedule`] at 1, if detected.
    pub fn flatness(&self) -> Option<Flatness> {
        self.flatness
    }

    /// Continuous spec with both generators and the rate bound multiplied by
    /// `factor`.
    pub fn time_scaled(&self, factor: f64) -> Result<Self> {
        match (&self.initial, &self.final_kernel, self.rate_bound) {
            (Kernel::Continuous(a), Kernel::Continuous(b), Some(bound)) => {
                AdiabaticSpec::continuous(
                    a.scaled(factor)?,
                    b.scaled(factor)?,
                    self.family.clone(),
                    bound.scaled(factor)?,
                )
            }
            _ => Err(Error::ModeMismatch(
                "time scaling needs a continuous-time spec",
            )),
        }
    }

    pub(crate) fn row_entries(&self, i: usize) -> &[PatternEntry] {
        &self.pattern[self.offsets[i]..self.offsets[i + 1]]
    }

    fn max_exit_rate(&self, phi: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| self.row_entries(i).iter().map(|e| e.at(phi)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Sparse kernel (discrete) or generator with diagonal (continuous) at `s`.
    pub(crate) fn fill_at(&self, s: f64, phi: &mut Vec<f64>, out: &mut SparseRows) -> Result<()> {
        self.family.values_at(s, phi);
        let n = self.dim();
        if out.dim() != n {
            *out = SparseRows::with_dim(n);
        } else {
            out.clear();
        }
        let discrete = self.is_discrete();
        for i in 0..n {
            let mut sum = 0.0;
            for e in self.row_entries(i) {
                let v = e.at(phi);
                sum += v;
                out.push(e.col, v);
            }
            if discrete {
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InconsistentSchedules { row: i, s, sum });
                }
            } else {
                out.push(i, -sum);
            }
            out.end_row();
        }
        Ok(())
    }

    fn dense_at(&self, s: f64) -> Result<DMatrix<f64>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfDomain(s));
        }
        let mut phi = Vec::new();
        let mut rows = SparseRows::default();
        self.fill_at(s, &mut phi, &mut rows)?;
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in rows.row(i) {
                m[(i, j)] += v;
            }
        }
        Ok(m)
    }

    /// The interpolated kernel at `s`, in the mode of the spec.
    pub fn kernel_at(&self, s: f64) -> Result<Kernel> {
        if self.is_discrete() {
            interpolate_kernel(self, s).map(Kernel::Discrete)
        } else {
            interpolate_generator(self, s).map(Kernel::Continuous)
        }
    }
}

/// Entrywise interpolation `(1 - phi_ij(s)) P_init + phi_ij(s) P_final`.
pub fn interpolate_kernel(spec: &AdiabaticSpec, s: f64) -> Result<StochasticMatrix> {
    if !spec.is_discrete() {
        return Err(Error::ModeMismatch(
            "interpolate_kernel needs a discrete-time spec",
        ));
    }
    StochasticMatrix::validated(spec.dense_at(s)?, ROW_SUM_TOL)
}

/// Off-diagonal interpolation of rates; the diagonal is the negative row sum.
pub fn interpolate_generator(spec: &AdiabaticSpec, s: f64) -> Result<Generator> {
    if spec.is_discrete() {
        return Err(Error::ModeMismatch(
            "interpolate_generator needs a continuous-time spec",
        ));
    }
    Generator::from_off_diagonal(spec.dense_at(s)?)
}

/// Splits the kernel at `s` as `phi(s) * final + (1 - phi(s)) * hat`, where
/// `phi` is [`AdiabaticSpec::min_schedule`]. Returns `(hat, phi(s))`.
pub fn decompose_hat(spec: &AdiabaticSpec, s: f64) -> Result<(Kernel, f64)> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::OutOfDomain(s));
    }
    let phi = spec.min_schedule().value(s);
    if phi >= 1.0 {
        return Err(Error::DegenerateDecomposition { s });
    }
    let mut values = Vec::new();
    spec.family.values_at(s, &mut values);
    let n = spec.dim();
    let mut hat = DMatrix::zeros(n, n);
    let rest = 1.0 - phi;
    for i in 0..n {
        for e in spec.row_entries(i) {
            let w = values[e.member];
            // written so that w == phi reproduces the initial entry exactly
            let v = e.initial * ((1.0 - w) / rest) + e.fin * ((w - phi) / rest);
            hat[(i, e.col)] = v.max(0.0);
        }
    }
    let kernel = if spec.is_discrete() {
        Kernel::Discrete(StochasticMatrix::validated(hat, ROW_SUM_TOL)?)
    } else {
        Kernel::Continuous(Generator::from_off_diagonal(hat)?)
    };
    Ok((kernel, phi))
}
