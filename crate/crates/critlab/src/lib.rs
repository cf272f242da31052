//! Config-driven experiment runner and regression fixtures.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod verify;

use std::time::SystemTime;

pub use config::{ExperimentConfig, ExperimentKind, Overrides};
pub use error::{ConfigError, HarnessError, Result};
pub use output::Summary;

/// Runs the configured experiment and writes its artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let started = SystemTime::now();
    eprintln!(
        "critlab: running {} (seed {}, replicas {})",
        cfg.experiment, cfg.seed, cfg.replicas
    );
    let outcome = experiments::run_experiment(cfg)?;
    let summary = output::write_outcome(cfg, &outcome, started)?;
    eprintln!(
        "critlab: wrote {} files to {}",
        summary.files.len(),
        cfg.output_path.display()
    );
    Ok(summary)
}
