//! Config parsing and subcommands behind the `hopf-critic` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{
    convergence_config, load_source, reduction_config, run, CliError, Command, Outcome, Overrides, WORKERS_ENV,
};
pub use config::{parse_config, ConfigError, ConfigErrors, ExperimentConfig};
