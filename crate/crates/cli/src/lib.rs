//! Reproducible experiment runs for ocp-core: spec parsing, artifact writing, verification.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{parse_spec, ConfigError, ExperimentSpec, Kind};
pub use run::{run_experiment, Outcome, RunError, RunSummary, EXIT_RUNTIME_ERROR};
pub use verify::{verify_dir, VerifyReport};
