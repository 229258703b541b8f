#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod builtin;
pub mod engine;
pub mod error;
pub mod glauber;
pub mod interpolation;
pub mod markov;
pub mod numeric;
pub mod schedule;
pub mod sparse;

pub use engine::{
    adiabatic_time, evolve_continuous, evolve_discrete, mixing_time, sample_path,
    trajectory_deviation, worst_case, SearchOptions, SearchReport, StartSet,
};
pub use error::{Error, Result};
pub use interpolation::{decompose_hat, interpolate_generator, interpolate_kernel, AdiabaticSpec};
pub use markov::{
    stationary_distribution, step_distribution, transient_distribution, tv_distance, Distribution,
    Generator, Kernel, RateBound, StochasticMatrix,
};
pub use schedule::{Flatness, Schedule, ScheduleFamily, ScheduleSpec};
