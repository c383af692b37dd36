//! Soccer passing networks, network metrics, and match outcome models.

pub mod error;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod league;
pub mod models;
pub mod netmetrics;
pub mod passnet;
pub mod pipeline;
pub mod synth;
pub mod unsupervised;

pub use error::{Error, Result};
