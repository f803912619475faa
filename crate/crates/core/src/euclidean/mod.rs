//! Metric upgrade of affine group clouds from ground control points, and
//! rigid ICP fusion of several upgraded groups.

mod fuse;
mod gcp;
mod icp;
mod upgrade;

pub use fuse::{fuse_groups, FuseOutcome};
pub use gcp::{load_gcps, save_gcps, Gcp};
pub use icp::{fit_rigid, icp_align, IcpConfig, IcpReport, RigidTransform};
pub use upgrade::{locate_affine_gcp, upgrade_group, GcpResidual, UpgradeOutcome, MIN_GCPS};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum EuclideanError {
    #[error("GCP {gcp_id} has {usable} usable image observation(s), need 2")]
    GcpNotVisible { gcp_id: String, usable: usize },
    #[error("{found} locatable GCP(s), need at least {required}")]
    InsufficientGcps { found: usize, required: usize },
    #[error("clouds do not overlap: {pairs} correspondence(s) within range, need 3")]
    NoOverlap { pairs: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("GCP file line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EuclideanError {
    pub fn kind(&self) -> &'static str {
        match self {
            EuclideanError::GcpNotVisible { .. } => "GcpNotVisible",
            EuclideanError::InsufficientGcps { .. } => "InsufficientGcps",
            EuclideanError::NoOverlap { .. } => "NoOverlap",
            EuclideanError::Geometry(g) => g.kind(),
            EuclideanError::ParseError { .. } => "ParseError",
            EuclideanError::Io { .. } => "IoError",
        }
    }
}
