//! Staged batch pipeline over the `tagprof-core` library.

pub mod config;
pub mod error;
pub mod stages;
pub mod svg;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use stages::{Manifest, Outcome, Runner, Stage, PIPELINE};

/// Run one named stage (or `all`) with `cfg`.
pub fn run_stage(name: &str, cfg: PipelineConfig) -> Result<Vec<(&'static str, Outcome)>> {
    Runner::new(cfg)?.run(name)
}
