//! Config-driven experiment runner over `phaseflow-core`.
//!
//! A run reads one TOML config, validates it completely, executes the
//! requested stages and writes a report bundle (CSV, JSON, SVG and a
//! manifest with checksums). Reruns of a config produce byte-identical
//! CSV and JSON regardless of the worker thread count.

pub mod bundle;
pub mod config;
pub mod format;
pub mod run;
pub mod svg;

pub use config::{load_config, parse_config, ConfigError, Experiment, RunConfig};
pub use run::{run, Command, RunError, RunOptions, RunSummary};
