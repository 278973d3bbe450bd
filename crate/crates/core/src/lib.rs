//! Variant-probability random search for constrained pseudo-Boolean
//! maximization.
//!
//! A [`Problem`] holds a linear objective, linear `<=` rows, optional
//! at-most-one groups and an optional multiplicative second criterion.
//! The [`Solver`] samples Boolean vectors from a [`ProbabilityVector`],
//! scores them with a penalized objective and shifts the probabilities
//! toward the best vector of each batch. [`cluster`] runs several solvers
//! that share records; [`bench`] generates instances and measures speedup.

pub mod adapt;
pub mod bench;
pub mod bits;
pub mod cluster;
pub mod error;
pub mod model;
pub mod sampler;
pub mod solver;

pub use adapt::{AdaptConfig, RollbackMode, Schedule, Strategy};
pub use bits::Bits;
pub use error::{Error, Result};
pub use model::{
    Candidate, Constraint, Group, Orientation, Problem, ProblemBuilder, Scores, SecondCriterion,
    Sense,
};
pub use sampler::{initial_probability, ProbabilityVector, P_MIN};
pub use solver::{
    solve, ClockKind, Restart, Solution, Solver, SolverConfig, StagnationHandler, StopReason,
    Target, TracePoint,
};
