//! Command-line experiment driver: declarative configs, parameter sweeps,
//! plot-ready CSV tables and reproducibility manifests.

pub mod config;
pub mod output;
pub mod runner;

pub use config::ExperimentConfig;
pub use output::{manifest_path, RunManifest, RESOURCES_CSV_HEADER, RUN_CSV_HEADER, SERIES_CSV_HEADER};
pub use runner::{cmd_resources, cmd_run, cmd_run_from_manifest, cmd_validate};
