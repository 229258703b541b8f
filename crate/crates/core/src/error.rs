use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid stochastic matrix: {0}")]
    InvalidStochasticMatrix(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("stationary distribution is not unique (null space dimension {nullity}){}", at_suffix(*.at))]
    NonUniqueStationary { nullity: usize, at: Option<f64> },

    #[error("stationary solve did not converge (residual {residual:e})")]
    StationarySolve { residual: f64 },

    #[error("rate bound {lambda} is below the maximal exit rate {required}")]
    InvalidRateBound { lambda: f64, required: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("schedule argument {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("no derivative of order <= {max_m} at s = 1 exceeds {tol:e}")]
    FlatnessUndetected { max_m: u32, tol: f64 },

    #[error("row {row} of the interpolated kernel at s = {s} sums to {sum}")]
    InconsistentSchedules { row: usize, s: f64, sum: f64 },

    #[error("minimum schedule equals 1 at s = {s} < 1")]
    DegenerateDecomposition { s: f64 },

    #[error("mode mismatch: {0}")]
    ModeMismatch(&'static str),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("mixing time not reached within cap {cap}")]
    MixingTimeout { cap: f64 },

    #[error(
        "adiabatic time search exceeded cap {cap} (last probe T = {last_probe}, tv = {last_tv})"
    )]
    SearchTimeout {
        cap: f64,
        last_probe: f64,
        last_tv: f64,
    },

    #[error("lattice with {sites} sites exceeds the enumeration cap of {cap} sites")]
    EnumerationCapExceeded { sites: usize, cap: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("degenerate neighbourhood class: {0}")]
    DegenerateClass(String),

    #[error("numerical drift: {0}")]
    NumericalDrift(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn at_suffix(at: Option<f64>) -> String {
    match at {
        Some(s) => format!(" at s = {s}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
