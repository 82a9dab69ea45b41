//! Experiment harness for `mwgibbs-core`: lemma suites, the main-inequality
//! experiment, symmetry scans, reports and the `mwgibbs` command line.

pub mod checks;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod events;
pub mod experiment;
pub mod plan;
pub mod report;
pub mod suite;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Core(#[from] mwgibbs_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> HarnessError {
    let context = context.to_string();
    move |source| HarnessError::Io { context, source }
}
