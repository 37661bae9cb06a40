//! A small, self-contained mixed-integer linear programming solver.
//!
//! The solver is built for desk-scale planning models (hundreds of variables,
//! hundreds of constraints) where exact reproducibility matters more than raw
//! speed:
//!
//! * linear programs are solved with a dense, bounded-variable two-phase
//!   primal simplex using Bland's smallest-index pivot rule, so every run of
//!   the same problem takes the same pivot path;
//! * integer programs are solved with best-bound branch and bound over the
//!   binary variables, with a rounding heuristic to find incumbents early and
//!   fully deterministic tie-breaking;
//! * [`brute_force_solve`] enumerates all binary assignments (up to 20
//!   binaries) and serves as an independent reference for testing.
//!
//! Problems are built through [`ProblemBuilder`]; all variables are either
//! continuous (`0 <= x <= upper`) or binary.

mod lp_text;
mod problem;
mod simplex;
mod solve;

pub use problem::{
    BranchRule, BuildError, Constraint, LinExpr, MilpProblem, MilpSolution, ProblemBuilder,
    Relation, SolveStatus, SolverConfig, VarDomain, VarId, Variable, Violation,
};
pub use solve::{brute_force_solve, solve, solve_lp_relaxation, SolveError, MAX_BRUTE_BINARIES};
