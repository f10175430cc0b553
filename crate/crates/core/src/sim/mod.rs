//! Deterministic simulation: scenario files, the slot loop, metrics and
//! trace checks.

pub mod check;
pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod suite;

pub use engine::{build_net, run, run_with, RunOutput};
pub use metrics::{compute_metrics, MetricsReport};
pub use scenario::{ConfigError, Scenario};
