use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const DIVERGENCE: i32 = 2;
    pub const LINE_SEARCH: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] metamorph_core::Error),
    #[error("line search failed after {iterations} iterations")]
    LineSearch { iterations: usize },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn image(path: &Path, source: image::ImageError) -> Self {
        CliError::Image {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(metamorph_core::Error::Divergence { .. }) => exit::DIVERGENCE,
            CliError::LineSearch { .. } => exit::LINE_SEARCH,
            _ => exit::INPUT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Image { .. } => "image",
            CliError::Parse { .. } => "parse",
            CliError::Json { .. } => "manifest",
            CliError::Usage(_) => "usage",
            CliError::Core(metamorph_core::Error::Divergence { .. }) => "divergence",
            CliError::Core(metamorph_core::Error::GeometryMismatch { .. }) => "geometry",
            CliError::Core(_) => "invalid-input",
            CliError::LineSearch { .. } => "line-search",
        }
    }

    /// Single-line diagnostic: `error code=<n> kind=<kind> message=<json string>`.
    pub fn diagnostic(&self) -> String {
        let message = serde_json::to_string(&self.to_string()).expect("strings serialize");
        format!("error code={} kind={} message={}", self.exit_code(), self.kind(), message)
    }
}
