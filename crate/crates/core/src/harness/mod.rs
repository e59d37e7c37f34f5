//! Closed-loop benchmark: scenarios, simulation, metrics and reports.

pub mod metrics;
pub mod report;
pub mod scenario;
pub mod simulate;

pub use metrics::{e_rmse, n_switch};
pub use report::{comparison, write_comparison_csv, write_report, ComparisonRow};
pub use scenario::{synth_scenario, Scenario, ScenarioRow, SynthProfile};
pub use simulate::{read_trajectory_csv, simulate, BaselineController, Controller, Observation, RunReport, TrajectoryRow};
