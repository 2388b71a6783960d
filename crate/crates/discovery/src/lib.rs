//! File formats, factorial sweeps, chain reports and the acceptance suite
//! around `discovery-core`.

pub mod acceptance;
pub mod chain_report;
pub mod config;
pub mod error;
pub mod factorial;
pub mod metadata;
pub mod results;
pub mod summary;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
