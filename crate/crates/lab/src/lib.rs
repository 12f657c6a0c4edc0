//! File formats, reports and pipeline orchestration around `scalab-core`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod modelio;
pub mod pipeline;
pub mod report;
pub mod traceio;

pub use config::{Attacker, PipelineConfig};
pub use error::{LabError, Result};
pub use pipeline::{Lab, Stage};
