#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod graphgl;
pub mod io;
pub mod linesearch;
pub mod model;
pub mod operator;
pub mod parallel;
pub mod precond;
pub mod scad;
pub mod solvers;

pub use error::{DcError, Result};
pub use model::{DcProblem, Term};
pub use operator::SymOperator;
pub use parallel::Execution;
pub use solvers::{solve, Algorithm, SolveReport, SolverConfig, Status, TerminationRule};
