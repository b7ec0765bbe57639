//! Crate-wide error type.

use std::path::PathBuf;

/// Errors raised by every stage of the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series `{id}` is too short: need at least {required} steps, got {actual}")]
    SeriesTooShort {
        id: String,
        required: usize,
        actual: usize,
    },

    #[error("window of {required} steps does not fit in a series of {length} steps")]
    WindowTooLong { length: usize, required: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("series `{id}` has a non-finite value at index {index}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    NonFinite {
        id: String,
        index: usize,
        line: Option<usize>,
    },

    #[error("no series")]
    NoSeries,

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("uniform defined only on truncated support")]
    UniformUnbounded,

    #[error("distribution degenerate on support of size {support}")]
    DegenerateDistribution { support: usize },

    #[error("offset {offset} outside start range of size {size}")]
    OffsetOutOfRange { offset: usize, size: usize },

    #[error("non-finite value at step {step}")]
    NonFiniteStep { step: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("normalizer zero")]
    NormalizerZero,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("leakage: stage `{stage}` touched time index {index} beyond training end {training_end}")]
    Leakage {
        stage: String,
        index: usize,
        training_end: usize,
    },

    #[error("no trial reached the top rung")]
    NoIncumbent,

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (files, configs, parameters)
    /// rather than by a failure while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::SeriesTooShort { .. }
            | Error::WindowTooLong { .. }
            | Error::Parse { .. }
            | Error::NonFinite { .. }
            | Error::NoSeries
            | Error::Invalid { .. }
            | Error::UniformUnbounded
            | Error::OffsetOutOfRange { .. }
            | Error::LengthMismatch { .. }
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
