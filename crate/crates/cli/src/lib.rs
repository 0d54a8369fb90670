//! Configuration, stage orchestration and report emission for the `bnncert`
//! command-line tool.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{exit, CliError, CliResult};
pub use pipeline::{cmd_certify, cmd_fit, cmd_plan, cmd_sample, cmd_validate, read_report, Report};
