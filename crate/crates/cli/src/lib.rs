//! Simulate / estimate / eval workflows around `lgpose-core`: JSON run
//! configuration, versioned CSV tables and the accuracy metrics.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;

pub use config::RunConfig;
pub use error::CliError;
pub use metrics::MetricsReport;
