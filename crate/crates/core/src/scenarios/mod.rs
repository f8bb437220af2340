//! Experiment orchestration: configuration, end-to-end runs and comparisons.

pub mod config;
pub mod run;

pub use config::{load_config, load_config_with, parse_config, Overrides, ScenarioConfig};
pub use run::{compare_runs, doppler_sweep, reconstruct_from_file, run_scenario, simulate, RunManifest, RunOptions};
