//! File formats, configuration, and command orchestration for the
//! flow-based OOD detection toolkit.
//!
//! The numeric substance lives in `flowguard-core`; this crate adds the
//! binary weight/dataset formats, score dumps, evaluation reports, the
//! INI-style run configuration, and the `flowguard` command-line front
//! end. Every command is reproducible: the same resolved configuration
//! and seed yield byte-identical outputs.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod dump;
pub mod report;
pub mod weights;

use std::path::PathBuf;

/// IO-level errors across the file formats.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] flowguard_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl IoError {
    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> IoError {
        IoError::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> IoError {
        IoError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IoError>;
