//! IO, configuration, and orchestration around the `esgbl-core` engine:
//! TOML run configs, delimiter-separated data files, the parallel grid
//! driver, reproducibility manifests, SVG equity-curve plots, and the
//! synthetic dataset generator backing the desk-scale test protocol.

pub mod config;
pub mod files;
pub mod plot;
pub mod run;
pub mod synth;

pub use esgbl_core as core;

use thiserror::Error;

/// Process exit codes are a stable contract:
/// 0 success, 1 partial strategy failure, 2 configuration error, 3 data error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Success,
    Partial,
    Config,
    Data,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Success => 0,
            ExitKind::Partial => 1,
            ExitKind::Config => 2,
            ExitKind::Data => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn exit_kind(&self) -> ExitKind {
        match self {
            AppError::Config(_) => ExitKind::Config,
            AppError::Data(_) | AppError::Io { .. } => ExitKind::Data,
        }
    }

    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }
}
