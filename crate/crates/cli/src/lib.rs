//! Batch commands over the `ksum-core` library: agency disagreement
//! reports, efficient surfaces, backtests and synthetic data. Every command
//! reads a JSON [`RunConfig`] and writes CSV tables plus a `manifest.json`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{cmd_backtest, cmd_disagreement, cmd_frontier, cmd_synth, Outcome};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult, ExitStatus};
