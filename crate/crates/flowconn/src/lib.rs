//! Experiment runner for `flowconn-core`: configuration, spec grammars,
//! report formats and the subcommands behind the `flowconn` binary.
//!
//! Exit codes are `0` (pass), `1` (quantitative failure) and `2` (usage,
//! configuration or runtime error).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod grammar;
pub mod report;

pub use commands::{Command, Outcome};
pub use config::ExperimentConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Core(#[from] flowconn_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        EXIT_ERROR
    }
}
