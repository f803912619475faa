//! Staged on-disk workflow.
//!
//! Every stage reads the files written by earlier stages, writes its own
//! outputs under one workspace directory and finishes by writing a stage
//! manifest with the hashes of its config slice, inputs and outputs. A stage
//! whose manifest still matches is skipped.

mod config;
mod report;
mod stages;
mod workspace;

pub use config::{
    DenseConfig, EvalConfig, FuseConfig, InputConfig, MatcherConfig, MatcherKind, RansacSection, RunConfig,
    SfmSection, SynthConfig, TilingConfig, UpgradeConfig,
};
pub use report::{write_report, RunReport, StageEntry, StageStatus, REPORT_SCHEMA};
pub use stages::{
    cmd_dense, cmd_eval, cmd_fuse, cmd_group, cmd_match, cmd_run, cmd_sfm, cmd_synth, cmd_tile, cmd_upgrade,
    EvalMetrics,
};
pub use workspace::{hash_file, stage_dir, StageManifest, Workspace, STAGES, STAGE_MANIFEST_SCHEMA};

use std::fmt;
use std::path::Path;

/// A failed stage: which stage, the module error kind, and the message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &str, kind: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("", "IoError", format!("{}: {e}", path.display()))
    }

    /// Attributes an error raised inside a stage body to that stage.
    pub(crate) fn at(mut self, stage: &str) -> Self {
        if self.stage.is_empty() {
            self.stage = stage.into();
        }
        self
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}: {}", self.stage, self.kind, self.message)
    }
}

impl std::error::Error for PipelineError {}

macro_rules! from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::new("", e.kind(), e.to_string())
            }
        }
    )*};
}

from_module_error!(
    crate::geometry::GeometryError,
    crate::imaging::ImagingError,
    crate::features::FeatureError,
    crate::sfm::SfmError,
    crate::dense::DenseError,
    crate::euclidean::EuclideanError,
    crate::evaluation::EvalError,
    crate::synthetic::SyntheticError
);
