//! Resumable batch pipeline behind the command-line tool.

pub mod config;
pub mod stages;
pub mod store;

pub use config::{ClusterRows, PipelineConfig};
pub use stages::{run_all, Stage};
pub use store::{PipelineLock, StageStatus, Store, LOCK_FILE};
