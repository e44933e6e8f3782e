//! Estimation of finite-time blow-up times for autonomous ODEs by forward
//! Euler with a priori adaptive steps, plus baselines and a convergence
//! study harness.

// Comparisons written `!(a > b)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod catalog;
pub mod expr;
pub mod harness;
pub mod integrate;
pub mod linalg;
pub mod problem;
pub mod stepping;
pub mod thresholds;

pub use integrate::{solve_1d, solve_log_nd, solve_nd, solve_separable, SolveError, SolverConfig};
pub use problem::{
    check_assumptions, validate, AssumptionReport, FinalState, GrowthKind, GrowthSpec, Problem,
    ProblemRef, RunResult, ScalarProblem, VectorProblem,
};
pub use stepping::StepLaw;
pub use thresholds::{Radius, ThresholdRule};
