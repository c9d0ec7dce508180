//! Batch driver for the flow laboratory: configuration, orchestration,
//! persistence and reporting.

pub mod checkpoint;
pub mod config;
pub mod csvout;
pub mod error;
pub mod pipeline;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
pub use pipeline::{
    apply_overrides, compare_flows, diagnose, run_pipeline, verify_metric, Overrides,
};
