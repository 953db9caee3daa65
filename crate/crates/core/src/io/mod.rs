//! Configuration files, snapshots, heatmaps and timing tables.

pub mod config;
mod heatmap;
mod snapshot;
mod timings;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config, parse_config_str, write_config, ConfigError};
pub use heatmap::{render_heatmap, Palette};
pub use snapshot::{read_snapshot, write_snapshot, FieldKind, Snapshot};
pub use timings::{read_timings, write_timings};

/// Environment variable that relocates relative output directories.
pub const OUT_ROOT_ENV: &str = "CO2SEQ_OUT_ROOT";

#[derive(Error, Debug)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

/// Resolves an output directory against [`OUT_ROOT_ENV`] when it is relative.
pub fn resolve_output_dir(dir: &std::path::Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}
