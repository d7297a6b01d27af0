//! Configuration parsing, report rendering and subcommand execution for
//! the `pbfree` experiment runner.

// `!(x > 0)` style guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig, Subcommand};
pub use report::Report;
pub use run::{run, RunError, RunOutcome};
