//! Config-driven experiment runner for the `pdhg` crate.
//!
//! A TOML config names an instance, a step-size regime and the checks to
//! run; [`experiment::execute`] writes a per-step trajectory CSV and a summary
//! report, and [`sweep::sweep`] repeats that over a grid of schedule constants.

pub mod config;
pub mod experiment;
pub mod sweep;

pub use config::{parse_config, serialize_config, Check, ExperimentConfig};
pub use experiment::{execute, info, Outcome, Status};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("sweep cell {index} (c = {c:?}, s = {s:?}): {source}")]
    Cell { index: usize, c: Option<f64>, s: Option<f64>, source: Box<ConfigError> },
    #[error(transparent)]
    Core(#[from] pdhg::Error),
    #[error("i/o error: {0}")]
    Io(String),
}
