//! Optimal control bands for Brownian inventory models under long-run
//! average cost: solvers for impulse, reflecting and nonnegative-inventory
//! control, an exact evaluator for any band, a numerical optimality
//! certificate and a Monte Carlo cross-check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluator;
pub mod exec;
pub mod gcurve;
pub mod impulse;
pub mod model;
pub mod nonneg;
pub mod quad;
pub mod qvi;
pub mod roots;
pub mod sim;
pub mod singular;

use gcurve::SolverOptions;
use impulse::Solution;
use model::{Mode, ProblemSpec};

/// Runs the solver matching `spec.mode`.
pub fn solve(spec: &ProblemSpec, opts: SolverOptions) -> error::Result<Solution> {
    match spec.mode {
        Mode::Impulse => impulse::solve_impulse(spec, opts),
        Mode::Singular => singular::solve_singular(spec, opts),
        Mode::NonNegImpulse => nonneg::solve_nonneg(spec, opts),
    }
}
