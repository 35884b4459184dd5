//! Scenario files, runs, sweeps, reports and the acceptance suite behind
//! the `driftflow` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod execute;
pub mod report;
pub mod sweep;
pub mod verify;

pub use config::{parse_config, ScenarioConfig};
pub use error::{exit, CliError, CliResult};
pub use execute::{execute, parse_manifest, RunManifest};
pub use sweep::{parse_sweep, run_sweep, SweepPlan};
