//! Driver for the neurotrack experiment: configuration, staged execution
//! with a run manifest, and the figure-data report.

pub mod config;
pub mod manifest;
pub mod report;
pub mod run;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig};
pub use manifest::{RunManifest, Stage, StageRecord, StageStatus};
pub use run::{Layout, RunError, Runner};

/// Overrides the output directory named in the configuration.
pub const OUTPUT_ENV: &str = "NEUROTRACK_OUTPUT";
