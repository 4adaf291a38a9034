//! Timing-study harness for `chunked-ode`.
//!
//! Runs single trials or whole parameter grids over the four bundled
//! problems, records wall times of the forward and gradient phases next to
//! deterministic work counters, and writes everything as CSV. The same
//! crate hosts the property suites behind `odebench verify`.

pub mod config;
pub mod error;
pub mod study;
pub mod traj;
pub mod trial;
pub mod verify;

pub use config::{Gradient, Integration, Jacobian, Solver, TrialConfig};
pub use error::{BenchError, Result};
pub use study::{parse_grid, run_study, StudyGrid, StudySummary};
pub use traj::{dump_trajectory, TRAJECTORY_HEADER};
pub use trial::{run_trial, write_records, Repeat, TrialRecord, CSV_HEADER, TIMING_COLUMNS};
pub use verify::{verify, Suite, VerifyReport};
