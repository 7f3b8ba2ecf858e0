//! Batch harness around `uqbench-core`: JSONL record files, the HTTP NLI
//! client and cache, run configuration, the score / calibrate / evaluate
//! pipeline and the synthetic dataset generator.

use std::path::{Path, PathBuf};

pub mod cache;
pub mod config;
pub mod harness;
pub mod io;
pub mod nli_client;
pub mod precomputed;
pub mod report;
pub mod synth;

pub use config::RunConfig;
pub use io::{parse_record, serialize_record, stream_dataset, ParseError};

/// Fatal pipeline errors. Per-record and per-method failures are reported in
/// the outputs instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Dataset { path: PathBuf, source: io::DatasetError },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] uqbench_core::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, message: impl ToString) -> Self {
        Error::Format { path: path.as_ref().to_path_buf(), message: message.to_string() }
    }
}
