//! Accelerated first-order methods built from variable and operator
//! splitting, with Lyapunov-based verification of their convergence rates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod bregman;
pub mod checks;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lyapunov;
pub mod operators;
pub mod oracle;
pub mod problems;
pub mod solvers;
pub mod verify;

pub use error::{Result, VosError};
pub use harness::{compare_to_theorem, ProblemConstants, RateReport, TraceFormat, TraceRecord};
pub use linalg::{Matrix, Vector};
pub use problems::{Problem, ProblemKind, ProblemSpec};
pub use solvers::{run_scheme, RunOptions, RunOutcome, SchemeId, SchemeState, StepSizePolicy};
