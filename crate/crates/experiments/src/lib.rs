//! Batch reproduction of the steering-distillation figures and tables:
//! config loading, per-figure sweeps, CSV/SVG output and data ingestion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiments;
pub mod selfcheck;
pub mod svg;
pub mod table;

use std::fmt;

pub use config::{Config, ConfigError, Mode};
pub use table::{Cell, Table};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(steerdist_core::Error),
    Io(String, std::io::Error),
}

impl RunError {
    /// 2 for configuration or input errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Numerical(steerdist_core::Error::Parse { .. }) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(..) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numerical(e) => write!(f, "numerical error: {e}"),
            RunError::Io(path, e) => write!(f, "{path}: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<steerdist_core::Error> for RunError {
    fn from(e: steerdist_core::Error) -> Self {
        RunError::Numerical(e)
    }
}
