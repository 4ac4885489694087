//! Config-driven batch front end for the `packetscat` library.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{load, validate, ScenarioConfig, Units, Violation};
pub use run::{run, run_with_threads, validate_file, CliError, RunReport};
