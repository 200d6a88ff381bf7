//! File formats, configuration and subcommands behind the `proxkit` binary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod io;
pub mod manifest;
pub mod selftest;

pub use error::{CliError, CliResult};
