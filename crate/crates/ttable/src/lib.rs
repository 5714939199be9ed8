//! Time-triggered schedule tables for conditional-free HPC-DAG task sets.
//!
//! A table is found by iterative deepening: iteration `it` allows up to
//! `2^it` execution intervals per job, builds a mixed-integer model of the
//! table and solves it. [`construct_timetable`] stops at the first feasible
//! iteration.

mod error;
mod export;
mod model;
mod simplex;
mod solver;
mod table;

pub use error::{Result, TtError};
pub use export::export_lp;
pub use model::{
    build_ilp, ilp_split_inflation, linearize_disjunction, nb_int, nb_intervals, IlpModel, IntervalVars, JobDemand,
    Method, Row, Sense, VarId, VarKind, Variable,
};
pub use solver::{solve_builtin, solve_fixed, Solution, SolverConfig};
pub use table::{construct_timetable, exceeds_capacity, validate_timetable, Construction, FailReason, Reservation, TableViolation, TimeTable};
