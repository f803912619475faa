//! Dense reconstruction: rectify tile pairs, match them with a pluggable
//! stereo matcher, chain the dense correspondences into tracks and
//! triangulate them with the sparse cameras.

mod densify;
mod matcher;
mod ply;
mod rectify;
mod tracks;

pub use densify::{densify, DenseCloud, DensePoint, DensifyReport, DENSIFY_RMS_FLOOR};
pub use matcher::{DisparityMap, StereoMatcher, ZnccMatcher};
pub use ply::{read_ply, write_ply};
pub use rectify::{lift_disparities, rectify_and_match, warp_to_canvas, RectifiedPair, DEFAULT_MARGIN};
pub use tracks::{build_dense_tracks, DenseTrack, PhotoConsistencyConfig, DENSE_TRACK_QUANTUM};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum DenseError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("stereo matcher produced no valid disparities: {0}")]
    MatcherFailure(String),
    #[error("malformed point cloud {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DenseError {
    pub fn kind(&self) -> &'static str {
        match self {
            DenseError::Geometry(g) => g.kind(),
            DenseError::MatcherFailure(_) => "MatcherFailure",
            DenseError::Format { .. } => "FormatError",
            DenseError::Io { .. } => "IoError",
        }
    }
}
