//! Command-line experiment driver: descriptor extraction, training,
//! prediction, method benchmarks and gradient self-checks.

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod data;
pub mod split;

pub use commands::{run, CliError};
