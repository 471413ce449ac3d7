//! Closed-loop simulation, benchmarking and cross-validation on top of
//! `mpct-core`, plus the bundled example models. The `mpct` binary is a thin
//! CLI over this crate.

pub mod bench;
pub mod check;
mod error;
pub mod models;
pub mod plot;
pub mod scenario;
pub mod simulate;

pub use bench::{run_benchmark, Aggregate, BenchOptions, BenchReport, BenchStats, TrialRecord};
pub use check::{cross_validate, CheckItem, CheckReport};
pub use error::{HarnessError, Result};
pub use plot::{emit_plot_data, plot_header, write_plot_csv};
pub use scenario::{LoadedScenario, ReferenceSpec, Scenario, StateInterval};
pub use simulate::{simulate_closed_loop, simulate_trial, SimFailure, Trajectory, TrajectoryStep};
