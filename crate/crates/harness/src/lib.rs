//! Replication engine, result tables, acceptance suites and CLI support for
//! `ope-core`.

pub mod acceptance;
pub mod config;
pub mod experiment;
pub mod stats;
pub mod table;

use ope_core::OpeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] OpeError),

    #[error("replication {index} (seed {seed}) failed: {source}")]
    Replication {
        index: usize,
        seed: u64,
        #[source]
        source: OpeError,
    },

    #[error("unknown suite {name:?}; available suites: {}", available.join(", "))]
    UnknownSuite { name: String, available: Vec<&'static str> },

    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Output(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Output(e.to_string())
    }
}
