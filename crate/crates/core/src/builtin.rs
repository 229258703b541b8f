//! Named example problems: the shift chains (reset-to-0 versus a
//! deterministic walk to an absorbing end state) in discrete and continuous
//! time, and heat-bath dynamics on a small torus.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glauber::{build_adiabatic_glauber_spec, TorusLattice};
use crate::interpolation::AdiabaticSpec;
use crate::markov::{Generator, RateBound, StochasticMatrix};
use crate::schedule::ScheduleFamily;

/// Transition matrices on states `0..=n`: the initial one sends every state
/// to 0, the final one moves `i -> i + 1` and holds at `n`.
pub fn shift_matrices(n: usize) -> Result<(StochasticMatrix, StochasticMatrix)> {
    if n == 0 {
        return Err(Error::InvalidArgument("shift example needs n >= 1".into()));
    }
    let k = n + 1;
    let mut reset = DMatrix::zeros(k, k);
    let mut shift = DMatrix::zeros(k, k);
    for i in 0..k {
        reset[(i, 0)] = 1.0;
        shift[(i, (i + 1).min(n))] = 1.0;
    }
    Ok((StochasticMatrix::new(reset)?, StochasticMatrix::new(shift)?))
}

/// Continuous analogue: initially every `i >= 1` jumps to 0 at rate 1;
/// finally every `i < n` jumps to `i + 1` at rate 1.
pub fn shift_generators(n: usize) -> Result<(Generator, Generator)> {
    if n == 0 {
        return Err(Error::InvalidArgument("shift example needs n >= 1".into()));
    }
    let k = n + 1;
    let mut reset = DMatrix::zeros(k, k);
    let mut shift = DMatrix::zeros(k, k);
    for i in 1..k {
        reset[(i, 0)] = 1.0;
    }
    for i in 0..n {
        shift[(i, i + 1)] = 1.0;
    }
    Ok((
        Generator::from_off_diagonal(reset)?,
        Generator::from_off_diagonal(shift)?,
    ))
}

pub fn shift_discrete(n: usize, family: ScheduleFamily) -> Result<AdiabaticSpec> {
    let (a, b) = shift_matrices(n)?;
    AdiabaticSpec::discrete(a, b, family)
}

/// Every interpolated row has exit rate at most 1, so `lambda = 1`.
pub fn shift_continuous(n: usize, family: ScheduleFamily) -> Result<AdiabaticSpec> {
    let (a, b) = shift_generators(n)?;
    AdiabaticSpec::continuous(a, b, family, RateBound::new(1.0)?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinExample {
    ShiftDiscrete {
        n: usize,
    },
    ShiftContinuous {
        n: usize,
    },
    GlauberTorus {
        n: usize,
        d: usize,
        beta1: f64,
        beta2: f64,
    },
}

impl BuiltinExample {
    /// The example with a given schedule family; torus examples carry their
    /// own schedules and reject any other.
    pub fn build_with(&self, family: Option<ScheduleFamily>) -> Result<AdiabaticSpec> {
        match self {
            BuiltinExample::ShiftDiscrete { n } => shift_discrete(*n, family.unwrap_or_default()),
            BuiltinExample::ShiftContinuous { n } => {
                shift_continuous(*n, family.unwrap_or_default())
            }
            BuiltinExample::GlauberTorus { n, d, beta1, beta2 } => {
                if family.is_some() {
                    return Err(Error::InvalidArgument(
                        "torus examples use their own per-transition schedules".into(),
                    ));
                }
                build_adiabatic_glauber_spec(&TorusLattice::new(*n, *d)?, *beta1, *beta2)
            }
        }
    }

    pub fn build(&self) -> Result<AdiabaticSpec> {
        self.build_with(None)
    }
}

impl fmt::Display for BuiltinExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinExample::ShiftDiscrete { n } => write!(f, "shift-discrete({n})"),
            BuiltinExample::ShiftContinuous { n } => write!(f, "shift-continuous({n})"),
            BuiltinExample::GlauberTorus { n, d, beta1, beta2 } => {
                write!(f, "glauber-torus({n},{d},{beta1},{beta2})")
            }
        }
    }
}

impl FromStr for BuiltinExample {
    type Err = Error;

    fn from_str(name: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown example {name:?}"));
        let name = name.trim();
        let open = name.find('(').ok_or_else(bad)?;
        let args = name[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
        match (&name[..open], args.as_slice()) {
            ("shift-discrete", [n]) => Ok(BuiltinExample::ShiftDiscrete { n: int(n)? }),
            ("shift-continuous", [n]) => Ok(BuiltinExample::ShiftContinuous { n: int(n)? }),
            ("glauber-torus", [n, d, b1, b2]) => Ok(BuiltinExample::GlauberTorus {
                n: int(n)?,
                d: int(d)?,
                beta1: real(b1)?,
                beta2: real(b2)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Builds a named example such as `shift-discrete(10)` or
/// `glauber-torus(3,2,0.2,0.4)`.
pub fn builtin_example(name: &str) -> Result<AdiabaticSpec> {
    name.parse::<BuiltinExample>()?.build()
}
