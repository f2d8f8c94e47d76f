//! Configuration, experiment pipelines and reports for the `redpc` command.

pub mod config;
pub mod metrics;
pub mod run;
pub mod sweep;

pub use config::BenchConfig;
pub use metrics::{MethodMetrics, MetricsTable};
