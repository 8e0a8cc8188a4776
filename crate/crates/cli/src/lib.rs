//! Config-driven experiment runner on top of `vacpump-core`.
//!
//! A run goes: [`config::load`] (preset, file, `--set` overrides) →
//! [`run::run`] (unit conversion, dispatch, cutoff doubling) →
//! [`export::export`] (CSV / JSON, written atomically).

pub mod config;
pub mod error;
pub mod export;
pub mod presets;
pub mod run;

pub use config::{ConfigSource, Experiment, ExperimentConfig, Format, Units};
pub use error::CliError;
pub use run::{run, RunRecord, Table};

/// Environment variable overriding the worker-pool size.
pub const WORKERS_ENV: &str = "VACPUMP_WORKERS";
