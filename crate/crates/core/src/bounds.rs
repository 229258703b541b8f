//! Closed-form bounds on adiabatic times, the lower-bound expressions of
//! the shift example, power sums via Bernoulli numbers, and log-log
//! regression for measured scaling laws.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::schedule::{Flatness, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// Order-of-magnitude upper bound scaled by a stated prefactor.
    UpperOrder,
    ExplicitUpper,
    Lower,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::UpperOrder => "upper-order",
            BoundKind::ExplicitUpper => "explicit-upper",
            BoundKind::Lower => "lower",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub kind: BoundKind,
    pub params: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new(name: &str, value: f64, kind: BoundKind, params: &[(&str, f64)]) -> Self {
        BoundReport {
            name: name.to_string(),
            value,
            kind,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    /// `key=value` pairs joined by `;`.
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn unit_interval(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {eps} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Exact Bernoulli numbers `B_0..=B_k` with `B_1 = -1/2`.
#[derive(Clone, Debug)]
pub struct BernoulliTable {
    values: Vec<BigRational>,
}

impl BernoulliTable {
    pub fn new(k: usize) -> Self {
        // sum_{j=0}^{m} C(m+1, j) B_j = 0 for m >= 1
        let mut values: Vec<BigRational> = vec![BigRational::one()];
        for m in 1..=k {
            let mut acc = BigRational::zero();
            for (j, b) in values.iter().enumerate() {
                acc += BigRational::from_integer(binomial(m + 1, j)) * b;
            }
            values.push(-acc / BigRational::from_integer(BigInt::from(m + 1)));
        }
        BernoulliTable { values }
    }

    pub fn get(&self, j: usize) -> &BigRational {
        &self.values[j]
    }

    pub fn values(&self) -> &[BigRational] {
        &self.values
    }
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub const MAX_POWER: u32 = 20;

/// `sum_{j=1}^{n-1} j^k` from the Bernoulli-number closed form, in exact
/// rational arithmetic.
pub fn faulhaber_sum(n: u64, k: u32) -> Result<BigInt> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if k > MAX_POWER {
        return Err(Error::InvalidArgument(format!(
            "power {k} exceeds {MAX_POWER}"
        )));
    }
    let table = BernoulliTable::new(k as usize);
    let nn = BigInt::from(n);
    let mut total = BigRational::zero();
    for j in 0..=k as usize {
        let e = k as usize + 1 - j;
        let term = table.get(j)
            * BigRational::from_integer(binomial(k as usize, j) * num_traits::pow(nn.clone(), e))
            / BigRational::from_integer(BigInt::from(e));
        total += term;
    }
    if !total.is_integer() {
        return Err(Error::NumericalDrift(format!(
            "non-integral power sum {total}"
        )));
    }
    // for k = 0 the closed form also counts the j = 0 term 0^0 = 1
    if k == 0 {
        return Ok(total.to_integer() - 1);
    }
    Ok(total.to_integer())
}

/// `prefactor * t_mix^{(m+1)/m} / epsilon^{1/m}`.
pub fn discrete_adiabatic_bound(
    t_mix: f64,
    epsilon: f64,
    m: u32,
    prefactor: f64,
) -> Result<BoundReport> {
    positive("t_mix", t_mix)?;
    unit_interval(epsilon)?;
    positive("prefactor", prefactor)?;
    if m == 0 {
        return Err(Error::InvalidArgument("flatness order must be >= 1".into()));
    }
    let m_f = f64::from(m);
    let value = prefactor * t_mix.powf((m_f + 1.0) / m_f) / epsilon.powf(1.0 / m_f);
    Ok(BoundReport::new(
        "discrete_adiabatic",
        value,
        BoundKind::UpperOrder,
        &[
            ("t_mix", t_mix),
            ("epsilon", epsilon),
            ("m", m_f),
            ("prefactor", prefactor),
        ],
    )
    .note("order bound; the prefactor is calibrated, not a proven constant"))
}

/// `prefactor * (lambda / epsilon)^{1/m} * t_mix^{(m+1)/m}`.
pub fn continuous_adiabatic_bound(
    t_mix: f64,
    epsilon: f64,
    m: u32,
    lambda: f64,
    prefactor: f64,
) -> Result<BoundReport> {
    positive("t_mix", t_mix)?;
    unit_interval(epsilon)?;
    positive("lambda", lambda)?;
    positive("prefactor", prefactor)?;
    if m == 0 {
        return Err(Error::InvalidArgument("flatness order must be >= 1".into()));
    }
    let m_f = f64::from(m);
    let value = prefactor * (lambda / epsilon).powf(1.0 / m_f) * t_mix.powf((m_f + 1.0) / m_f);
    Ok(BoundReport::new(
        "continuous_adiabatic",
        value,
        BoundKind::UpperOrder,
        &[
            ("t_mix", t_mix),
            ("epsilon", epsilon),
            ("m", m_f),
            ("lambda", lambda),
            ("prefactor", prefactor),
        ],
    )
    .note("order bound; the prefactor is calibrated, not a proven constant"))
}

/// `lambda t_mix^2 / epsilon + t_mix + epsilon / (4 lambda)`, the explicit
/// bound for linear interpolation of generators; `t_mix` is the mixing
/// time at `epsilon / 2`.
pub fn kovchegov_continuous_explicit(t_mix: f64, epsilon: f64, lambda: f64) -> Result<BoundReport> {
    positive("t_mix", t_mix)?;
    unit_interval(epsilon)?;
    positive("lambda", lambda)?;
    let value = lambda * t_mix * t_mix / epsilon + t_mix + epsilon / (4.0 * lambda);
    Ok(BoundReport::new(
        "kovchegov_continuous_explicit",
        value,
        BoundKind::ExplicitUpper,
        &[("t_mix", t_mix), ("epsilon", epsilon), ("lambda", lambda)],
    ))
}

fn check_shift_range(n: u64, horizon: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n} < 2")));
    }
    if horizon < n {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} < n = {n}"
        )));
    }
    Ok(())
}

/// Lower bound on the worst-case distance after `horizon` steps of the
/// linearly interpolated shift example on `n + 1` states.
///
/// `exact`: `1 - prod_{j=T-n+1}^{T-1} j / T`, summed in log space.
/// Otherwise the relaxation `1 - exp(-n^2 / (4 T))`.
pub fn shift_example_lower_bound(n: u64, horizon: u64, exact: bool) -> Result<f64> {
    check_shift_range(n, horizon)?;
    let t = horizon as f64;
    if !exact {
        return Ok(-(-(n as f64).powi(2) / (4.0 * t)).exp_m1());
    }
    let log_prod: CompensatedSum = (horizon - n + 1..horizon)
        .map(|j| (-((horizon - j) as f64) / t).ln_1p())
        .collect();
    Ok(-log_prod.value().exp_m1())
}

/// [`shift_example_lower_bound`] as a table row.
pub fn shift_example_lower_bound_report(n: u64, horizon: u64, exact: bool) -> Result<BoundReport> {
    let value = shift_example_lower_bound(n, horizon, exact)?;
    let name = if exact {
        "shift_example_tv_exact"
    } else {
        "shift_example_tv_relaxed"
    };
    Ok(BoundReport::new(
        name,
        value,
        BoundKind::Lower,
        &[("n", n as f64), ("T", horizon as f64)],
    )
    .note("lower bound on the worst-case distance after T steps"))
}

/// `1 - prod_{j=T-n+1}^{T} phi(j / T)` for the shift example interpolated
/// along `phi`.
pub fn general_schedule_lower_bound(n: u64, horizon: u64, phi: &Schedule) -> Result<f64> {
    check_shift_range(n, horizon)?;
    let mut log_prod = CompensatedSum::new();
    for j in horizon - n + 1..=horizon {
        let v = phi.value(j as f64 / horizon as f64);
        if v <= 0.0 {
            return Ok(1.0);
        }
        log_prod.add(v.ln());
    }
    Ok(-log_prod.value().exp_m1())
}

/// Smallest horizon the shift example's lower bound allows for accuracy
/// `epsilon`: `T >= n^2 / (4 |log(1 - epsilon)|)`.
pub fn shift_example_minimal_horizon(n: u64, epsilon: f64) -> Result<BoundReport> {
    unit_interval(epsilon)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n} < 2")));
    }
    let value = (n as f64).powi(2) / (4.0 * -(-epsilon).ln_1p());
    let report = BoundReport::new(
        "shift_example_minimal_horizon",
        value,
        BoundKind::Lower,
        &[("n", n as f64), ("epsilon", epsilon)],
    );
    Ok(with_log_approximation_note(report, epsilon))
}

/// Leading-order lower bound on the horizon for the shift example along a
/// schedule flat of order `m` at 1:
/// `T^m >= (-1)^{m+1} phi^(m)(1) sum_{j=1}^{n-1} j^m / |log(1 - epsilon)|`,
/// neglecting `O((n / T)^{m+1})`.
pub fn flat_schedule_minimal_horizon(
    n: u64,
    epsilon: f64,
    flatness: Flatness,
) -> Result<BoundReport> {
    unit_interval(epsilon)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n} < 2")));
    }
    let m = flatness.order;
    let signed = if m % 2 == 1 {
        flatness.leading
    } else {
        -flatness.leading
    };
    let power_sum = faulhaber_sum(n, m)?.to_f64().unwrap_or(f64::INFINITY);
    let value = (signed * power_sum / -(-epsilon).ln_1p()).powf(1.0 / f64::from(m));
    let report = BoundReport::new(
        "flat_schedule_minimal_horizon",
        value,
        BoundKind::Lower,
        &[
            ("n", n as f64),
            ("epsilon", epsilon),
            ("m", f64::from(m)),
            ("leading", flatness.leading),
        ],
    )
    .note("leading order in n / T");
    Ok(with_log_approximation_note(report, epsilon))
}

fn with_log_approximation_note(report: BoundReport, epsilon: f64) -> BoundReport {
    if epsilon > 0.3 {
        report.note(
            "approximation epsilon ~ -log(1 - epsilon) invalid for epsilon > 0.3; exact log used",
        )
    } else {
        report.note("epsilon ~ -log(1 - epsilon) holds to within 20% here; exact log used")
    }
}

/// `g [coth g - tanh(-2 beta2)] / [1 - tanh(2 beta2)]^2` with
/// `g = 2 (beta1 - beta2)`; continuous through `beta1 = beta2`, where it
/// equals `1 / [1 - tanh(2 beta2)]^2`.
pub fn torus_constant_c(beta1: f64, beta2: f64) -> Result<f64> {
    if !beta1.is_finite() || !beta2.is_finite() {
        return Err(Error::InvalidArgument(format!("betas {beta1}, {beta2}")));
    }
    let g = 2.0 * (beta1 - beta2);
    let g_coth_g = if g.abs() < 1e-3 {
        let g2 = g * g;
        1.0 + g2 / 3.0 - g2 * g2 / 45.0 + 2.0 * g2 * g2 * g2 / 945.0
    } else {
        g / g.tanh()
    };
    let denom = 1.0 - (2.0 * beta2).tanh();
    Ok((g_coth_g - g * (-2.0 * beta2).tanh()) / (denom * denom))
}

/// `C (n^d / epsilon) [log n + log(2 / epsilon)]^2`, with `n^{2d}` in place
/// of `n^d` for clocks slowed to rate `n^{-d}`.
pub fn torus_adiabatic_bound(
    n: u64,
    d: u32,
    epsilon: f64,
    beta1: f64,
    beta2: f64,
    rescaled: bool,
) -> Result<BoundReport> {
    unit_interval(epsilon)?;
    if n < 3 || d == 0 {
        return Err(Error::InvalidArgument(format!("torus n = {n}, d = {d}")));
    }
    let c = torus_constant_c(beta1, beta2)?;
    let volume = (n as f64).powi(d as i32);
    let size = if rescaled { volume * volume } else { volume };
    let log_term = (n as f64).ln() + (2.0 / epsilon).ln();
    let value = c * size / epsilon * log_term * log_term;
    Ok(BoundReport::new(
        "torus_adiabatic",
        value,
        BoundKind::UpperOrder,
        &[
            ("n", n as f64),
            ("d", f64::from(d)),
            ("epsilon", epsilon),
            ("beta1", beta1),
            ("beta2", beta2),
            ("rescaled", if rescaled { 1.0 } else { 0.0 }),
            ("C", c),
        ],
    )
    .note("order bound with unit prefactor"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub samples: Vec<(f64, f64)>,
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(log x, log y)`.
pub fn fit_scaling_exponent(samples: &[(f64, f64)]) -> Result<ScalingFit> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0) || !x.is_finite() || !y.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "non-positive sample {bad:?}"
        )));
    }
    let k = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "samples need distinct x values".into(),
        ));
    }
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_prefactor - exponent * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(ScalingFit {
        samples: samples.to_vec(),
        exponent,
        log_prefactor,
        r_squared,
    })
}

/// Sign-adjusted leading derivative `(-1)^{m+1} phi^(m)(1)`, nonnegative
/// for any schedule bounded by 1.
pub fn signed_leading(flatness: Flatness) -> f64 {
    let v = flatness.leading;
    if flatness.order % 2 == 1 {
        v
    } else {
        -v
    }
}
