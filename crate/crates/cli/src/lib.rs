//! Replication harness for the perpetuity rare-event samplers: scenario
//! configs, deterministic parallel execution, streaming statistics, CSV
//! emission, the log-log slope check, and the appendix reproduction grid.

pub mod appendix;
pub mod config;
pub mod csvout;
pub mod runner;
pub mod slope;
pub mod stats;

pub use config::{parse_config, ConfigError, EstimatorKind, Load, ModelConfig, Scenario};
pub use csvout::{csv_text, emit_csv, CsvRow, CSV_HEADER};
pub use runner::{run_scenario, run_verify_lyapunov, theta_star_report, RunError, RunOutcome};
pub use slope::{slope_check, SlopeFit};
pub use stats::SummaryStats;
