//! Interpolation schedules `phi: [0, 1] -> [0, 1]` with `phi(0) = 0` and
//! `phi(1) = 1`, families assigning one schedule per transition entry, and
//! detection of the flatness order of a schedule at `s = 1`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid resolution used whenever a schedule property is checked pointwise.
pub const GRID_POINTS: usize = 1001;
const ENDPOINT_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-12;

/// Default search depth and threshold for flatness detection.
pub const DEFAULT_MAX_ORDER: u32 = 8;
pub const DEFAULT_FLATNESS_TOL: f64 = 1e-6;

pub fn grid() -> impl Iterator<Item = f64> {
    (0..GRID_POINTS).map(|k| k as f64 / (GRID_POINTS - 1) as f64)
}

#[derive(Clone)]
pub enum ScheduleKind {
    /// `phi(s) = s`.
    Linear,
    /// `phi(s) = 1 - (1 - s)^m`, flat of order `m` at 1.
    PolyFlat { m: u32 },
    /// `cosh(a b2) sinh(s c) / (sinh(c) cosh(-a b1 + s c))` with `c = a (b1 - b2)`:
    /// the Glauber reselection-rate schedule for a site whose neighbour
    /// spin sum has magnitude `a`.
    Glauber { a: f64, beta1: f64, beta2: f64 },
    /// Monotone cubic (Fritsch-Carlson) interpolation of knots.
    Sampled(MonotoneCubic),
    Custom {
        label: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// Pointwise minimum of the members.
    Min(Vec<Schedule>),
}

#[derive(Clone)]
pub struct Schedule {
    kind: ScheduleKind,
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ScheduleKind::Linear => write!(f, "Linear"),
            ScheduleKind::PolyFlat { m } => write!(f, "PolyFlat({m})"),
            ScheduleKind::Glauber { a, beta1, beta2 } => {
                write!(f, "Glauber(a={a}, beta1={beta1}, beta2={beta2})")
            }
            ScheduleKind::Sampled(c) => write!(f, "Sampled({} knots)", c.xs.len()),
            ScheduleKind::Custom { label, .. } => write!(f, "Custom({label})"),
            ScheduleKind::Min(members) => f.debug_tuple("Min").field(members).finish(),
        }
    }
}

/// Order `m` of the first nonvanishing derivative at 1 and its value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    pub order: u32,
    pub leading: f64,
}

impl Schedule {
    pub fn linear() -> Self {
        Schedule {
            kind: ScheduleKind::Linear,
        }
    }

    pub fn poly_flat(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSchedule(
                "poly_flat order must be >= 1".into(),
            ));
        }
        Ok(Schedule {
            kind: ScheduleKind::PolyFlat { m },
        })
    }

    pub fn glauber(a: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !beta1.is_finite() || !beta2.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "glauber parameters a={a}, beta1={beta1}, beta2={beta2}"
            )));
        }
        if beta1 == beta2 {
            return Err(Error::InvalidSchedule(
                "glauber schedule is undefined for beta1 = beta2".into(),
            ));
        }
        Schedule {
            kind: ScheduleKind::Glauber { a, beta1, beta2 },
        }
        .validated()
    }

    pub fn sampled(knots: &[(f64, f64)]) -> Result<Self> {
        Schedule {
            kind: ScheduleKind::Sampled(MonotoneCubic::new(knots)?),
        }
        .validated()
    }

    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Schedule {
            kind: ScheduleKind::Custom {
                label: label.into(),
                f: Arc::new(f),
            },
        }
        .validated()
    }

    pub fn min_of(members: Vec<Schedule>) -> Result<Self> {
        match members.len() {
            0 => Err(Error::InvalidSchedule("minimum of an empty family".into())),
            1 => Ok(members.into_iter().next().unwrap()),
            _ => Ok(Schedule {
                kind: ScheduleKind::Min(members),
            }),
        }
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    fn validated(self) -> Result<Self> {
        let at0 = self.raw(0.0);
        let at1 = self.raw(1.0);
        if (at0).abs() > ENDPOINT_TOL || (at1 - 1.0).abs() > ENDPOINT_TOL {
            return Err(Error::InvalidSchedule(format!(
                "{self:?}: endpoints phi(0) = {at0}, phi(1) = {at1}"
            )));
        }
        for s in grid() {
            let v = self.raw(s);
            if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                return Err(Error::InvalidSchedule(format!(
                    "{self:?}: phi({s}) = {v} outside [0, 1]"
                )));
            }
        }
        Ok(self)
    }

    /// Unclamped formula value; meaningful on `[0, 1]`.
    fn raw(&self, s: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Linear => s,
            ScheduleKind::PolyFlat { m } => 1.0 - (1.0 - s).powi(*m as i32),
            ScheduleKind::Glauber { a, beta1, beta2 } => glauber_formula(*a, *beta1, *beta2, s),
            ScheduleKind::Sampled(c) => c.eval(s),
            ScheduleKind::Custom { f, .. } => f(s),
            ScheduleKind::Min(members) => members
                .iter()
                .map(|m| m.value(s))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Value at `s`, assuming `s` in `[0, 1]`; endpoints are exact.
    pub fn value(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else {
            self.raw(s).clamp(0.0, 1.0)
        }
    }

    /// Checked evaluation.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfDomain(s));
        }
        Ok(self.value(s))
    }

    /// `phi^(k)(1)` from the closed form, where one is known.
    pub fn exact_derivative_at_one(&self, k: u32) -> Option<f64> {
        match &self.kind {
            ScheduleKind::Linear => Some(if k == 1 { 1.0 } else { 0.0 }),
            ScheduleKind::PolyFlat { m } => Some(if k == *m {
                let fact: f64 = (1..=*m).map(f64::from).product();
                if m % 2 == 1 {
                    fact
                } else {
                    -fact
                }
            } else if k < *m {
                0.0
            } else {
                // higher derivatives of 1 - (1-s)^m vanish at s = 1 as well
                0.0
            }),
            ScheduleKind::Glauber { a, beta1, beta2 } if k == 1 => {
                let c = a * (beta1 - beta2);
                Some(c * (a * beta1).cosh() / (c.sinh() * (a * beta2).cosh()))
            }
            _ => None,
        }
    }

    /// The member of a `Min` schedule that is smallest on a left
    /// neighbourhood of 1, if a single member is.
    fn dominant_member_near_one(&self) -> Option<&Schedule> {
        let ScheduleKind::Min(members) = &self.kind else {
            return None;
        };
        let probes: Vec<f64> = (1..=20).map(|i| 1.0 - i as f64 * 1e-3).collect();
        'outer: for cand in members {
            for &s in &probes {
                let v = cand.value(s);
                if members.iter().any(|m| m.value(s) < v - 1e-15) {
                    continue 'outer;
                }
            }
            return Some(cand);
        }
        None
    }
}

/// `eval_schedule` entry point.
pub fn eval_schedule(phi: &Schedule, s: f64) -> Result<f64> {
    phi.eval(s)
}

fn glauber_formula(a: f64, beta1: f64, beta2: f64, s: f64) -> f64 {
    let c = a * (beta1 - beta2);
    (-a * beta2).cosh() * (s * c).sinh() / (c.sinh() * (-a * beta1 + s * c).cosh())
}

/// Smallest `m <= max_m` with `|phi^(m)(1)| > tol`.
///
/// Closed-form derivatives are used when the schedule kind provides them;
/// otherwise, and for `Min` schedules without a single dominant member
/// near 1, they are estimated by [`flatness_order_numeric`].
pub fn flatness_order(phi: &Schedule, max_m: u32, tol: f64) -> Result<Flatness> {
    if let Some(member) = phi.dominant_member_near_one() {
        return flatness_order(member, max_m, tol);
    }
    if phi.exact_derivative_at_one(1).is_some() {
        for k in 1..=max_m {
            match phi.exact_derivative_at_one(k) {
                Some(d) if d.abs() > tol => {
                    return Ok(Flatness {
                        order: k,
                        leading: d,
                    })
                }
                Some(_) => continue,
                None => return flatness_order_numeric(phi, max_m, tol),
            }
        }
        return Err(Error::FlatnessUndetected { max_m, tol });
    }
    flatness_order_numeric(phi, max_m, tol)
}

/// Flatness order from one-sided finite differences at `s = 1`.
///
/// The `k`-th backward difference with step `h` is extrapolated over the
/// step sequence `h0, h0/2, ..., h0/16` with a Richardson table, cancelling
/// the error terms `h, h^2, ..., h^4`.
pub fn flatness_order_numeric(phi: &Schedule, max_m: u32, tol: f64) -> Result<Flatness> {
    if max_m == 0 {
        return Err(Error::InvalidArgument("max_m must be >= 1".into()));
    }
    for k in 1..=max_m {
        let d = numeric_derivative_at_one(phi, k);
        if d.abs() > tol {
            return Ok(Flatness {
                order: k,
                leading: d,
            });
        }
    }
    Err(Error::FlatnessUndetected { max_m, tol })
}

pub fn numeric_derivative_at_one(phi: &Schedule, k: u32) -> f64 {
    const LEVELS: usize = 5;
    let h0 = (0.2 / k as f64).min(0.1);
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    for (level, row) in table.iter_mut().enumerate() {
        let h = h0 / f64::powi(2.0, level as i32);
        row[0] = backward_difference(phi, k, h);
    }
    for col in 1..LEVELS {
        let factor = f64::powi(2.0, col as i32);
        for level in col..LEVELS {
            table[level][col] =
                (factor * table[level][col - 1] - table[level - 1][col - 1]) / (factor - 1.0);
        }
    }
    table[LEVELS - 1][LEVELS - 1]
}

fn backward_difference(phi: &Schedule, k: u32, h: f64) -> f64 {
    let mut acc = 0.0;
    let mut binom = 1.0;
    for i in 0..=k {
        let term = binom * phi.value(1.0 - i as f64 * h);
        acc += if i % 2 == 0 { term } else { -term };
        binom = binom * (k - i) as f64 / (i + 1) as f64;
    }
    acc / h.powi(k as i32)
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidSchedule("need at least two knots".into()));
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 {
            return Err(Error::InvalidSchedule("knots must span [0, 1]".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSchedule(
                "knot abscissae must increase".into(),
            ));
        }
        let n = xs.len();
        let secants: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if secants[i - 1] * secants[i] <= 0.0 {
                0.0
            } else {
                (secants[i - 1] + secants[i]) / 2.0
            };
        }
        for i in 0..n - 1 {
            if secants[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let alpha = slopes[i] / secants[i];
            let beta = slopes[i + 1] / secants[i];
            let r = alpha * alpha + beta * beta;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[i] = tau * alpha * secants[i];
                slopes[i + 1] = tau * beta * secants[i];
            }
        }
        Ok(MonotoneCubic { xs, ys, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= self.xs.len() => self.xs.len() - 2,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }
}

/// Config-file description of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Linear,
    PolyFlat { m: u32 },
    Glauber { a: f64, beta1: f64, beta2: f64 },
    Sampled { knots: Vec<[f64; 2]> },
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        match self {
            ScheduleSpec::Linear => Ok(Schedule::linear()),
            ScheduleSpec::PolyFlat { m } => Schedule::poly_flat(*m),
            ScheduleSpec::Glauber { a, beta1, beta2 } => Schedule::glauber(*a, *beta1, *beta2),
            ScheduleSpec::Sampled { knots } => {
                let pairs: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
                Schedule::sampled(&pairs)
            }
        }
    }
}

/// Per-entry schedules. Member 0 is the default applied to every entry
/// without an explicit assignment.
#[derive(Clone, Debug)]
pub struct ScheduleFamily {
    members: Vec<Schedule>,
    assignment: HashMap<(usize, usize), usize>,
    min: Schedule,
    flatness: Option<Flatness>,
}

impl Default for ScheduleFamily {
    fn default() -> Self {
        ScheduleFamily::uniform(Schedule::linear()).expect("linear schedule is flat of order 1")
    }
}

impl ScheduleFamily {
    /// One schedule for every entry.
    pub fn uniform(schedule: Schedule) -> Result<Self> {
        FamilyBuilder::new(schedule).build()
    }

    pub fn builder(default: Schedule) -> FamilyBuilder {
        FamilyBuilder::new(default)
    }

    pub fn members(&self) -> &[Schedule] {
        &self.members
    }

    pub fn member_index(&self, i: usize, j: usize) -> usize {
        self.assignment.get(&(i, j)).copied().unwrap_or(0)
    }

    pub fn schedule(&self, i: usize, j: usize) -> &Schedule {
        &self.members[self.member_index(i, j)]
    }

    pub fn assignments(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.assignment.iter().map(|(k, v)| (*k, *v))
    }

    /// Pointwise minimum over every member (the default included).
    pub fn min_schedule(&self) -> &Schedule {
        &self.min
    }

    pub fn flatness(&self) -> Option<Flatness> {
        self.flatness
    }

    /// Values of all members at `s`, indexed like [`Self::members`].
    pub fn values_at(&self, s: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.members.iter().map(|m| m.value(s)));
    }
}

/// `min_schedule` entry point.
pub fn min_schedule(family: &ScheduleFamily) -> Schedule {
    family.min_schedule().clone()
}

pub struct FamilyBuilder {
    members: Vec<Schedule>,
    assignment: HashMap<(usize, usize), usize>,
}

impl FamilyBuilder {
    fn new(default: Schedule) -> Self {
        FamilyBuilder {
            members: vec![default],
            assignment: HashMap::new(),
        }
    }

    /// Registers a schedule and returns its member index.
    pub fn add(&mut self, schedule: Schedule) -> usize {
        self.members.push(schedule);
        self.members.len() - 1
    }

    pub fn assign(&mut self, i: usize, j: usize, member: usize) -> &mut Self {
        assert!(member < self.members.len(), "unknown member {member}");
        self.assignment.insert((i, j), member);
        self
    }

    pub fn build(self) -> Result<ScheduleFamily> {
        let min = Schedule::min_of(self.members.clone())?;
        let flatness = checked_flatness(&min)?;
        Ok(ScheduleFamily {
            members: self.members,
            assignment: self.assignment,
            min,
            flatness,
        })
    }
}

/// Flatness of a minimum schedule, enforcing the sign constraint
/// `(-1)^(m+1) phi^(m)(1) >= 0` implied by `phi <= 1 = phi(1)`.
pub(crate) fn checked_flatness(min: &Schedule) -> Result<Option<Flatness>> {
    match flatness_order(min, DEFAULT_MAX_ORDER, DEFAULT_FLATNESS_TOL) {
        Ok(f) => {
            let signed = if f.order % 2 == 1 {
                f.leading
            } else {
                -f.leading
            };
            if signed < -1e-6 * f.leading.abs().max(1.0) {
                return Err(Error::InvalidSchedule(format!(
                    "derivative sign violates phi <= 1 near s = 1: {f:?}"
                )));
            }
            Ok(Some(f))
        }
        Err(Error::FlatnessUndetected { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}
