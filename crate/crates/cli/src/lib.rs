//! Experiment harness: reads a JSON config, runs the planner, bounds and
//! coalition analyses, and writes CSV/JSON results.

pub mod coalition;
pub mod config;
pub mod error;
pub mod output;
pub mod planning;

pub use coalition::{run_coalition, CoalitionReport, GameReport};
pub use config::{load, ExperimentConfig, Loaded};
pub use error::{CliError, CliResult};
pub use output::OutDir;
pub use planning::{oracle_check, run_bounds, run_plan, run_sweep, BoundsRow, OracleReport, PlanReport, SweepRow};
