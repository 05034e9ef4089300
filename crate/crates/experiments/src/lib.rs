//! Experiment harness for `htmdp`: strict TOML configs, the `htmdp` subcommands,
//! and the CSV/JSON writers behind them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod stats;

pub use config::{ExperimentConfig, Format};
