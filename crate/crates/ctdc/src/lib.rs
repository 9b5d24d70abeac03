//! File formats, parallel Monte Carlo and the `ctdc` command-line tool built
//! on [`ctdc_core`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;
pub mod mc;
pub mod report;

mod error;

pub use error::{Error, Result};
