//! File formats, configuration and subcommands for the `lnssm` command line
//! tool, on top of [`lnssm_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dalec_study;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pool;

pub use error::{CliError, Result};
pub use lnssm_core as core;
