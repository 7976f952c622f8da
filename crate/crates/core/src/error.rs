//! Crate-wide error type.
//!
//! Errors are deliberately coarse-grained: callers mostly need to tell
//! apart bad arguments, privacy-contract violations, degenerate numeric
//! inputs, checkpoint problems, and training divergence. Pipeline stages
//! wrap inner errors with a stage label so a failed run record can say
//! where it died.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A second read of the private data, or a clean (un-noised) embedding
    /// reaching the objective while privacy is enabled.
    #[error("privacy violation: {0}")]
    PrivacyViolation(String),

    /// A feature that cannot be normalized (gradient norm below threshold).
    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    /// A numerically unusable input (zero-norm matrix, non-finite entries).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("training diverged at step {step} (eta = {eta:e}): {detail}")]
    Divergence {
        step: usize,
        eta: f64,
        detail: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn at_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage label if this error was wrapped by the pipeline.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Pipeline stages, in execution order. The ordering is load-bearing:
/// the runner asserts that the label mapping is built strictly before
/// the single private read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    Ingest,
    Backbones,
    Mapping,
    Calibrate,
    Release,
    Train,
    Synthesize,
    Downstream,
    Persist,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Backbones => "backbones",
            Stage::Mapping => "mapping",
            Stage::Calibrate => "calibrate",
            Stage::Release => "release",
            Stage::Train => "train",
            Stage::Synthesize => "synthesize",
            Stage::Downstream => "downstream",
            Stage::Persist => "persist",
        };
        f.write_str(s)
    }
}

/// Checkpoint loading failures, kept distinct so callers can report
/// exactly what is wrong with a file.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing file: {0}")]
    Missing(PathBuf),

    #[error("bad magic bytes (not a checkpoint file): {0}")]
    BadMagic(PathBuf),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("shape inconsistency: {0}")]
    Shape(String),

    #[error("truncated or corrupt file: {0}")]
    Corrupt(String),
}
