//! Hierarchical reconstruction of satellite-style imagery.
//!
//! Source images are grouped by capture time and cropped into small
//! overlapping tiles. Each tile is modelled by an affine camera, so the
//! whole group can be reconstructed without ground control: an incremental
//! affine structure-from-motion recovers tile cameras and sparse structure,
//! rectified tile pairs are densely matched and triangulated, and finally a
//! 12-parameter affine transform fitted to a handful of ground control points
//! upgrades the cloud to metric coordinates.
//!
//! Module map:
//!
//! * [`geometry`]: closed-form and robust estimators (factorization,
//!   resection, triangulation, affine epipolar geometry, rectification,
//!   affine upgrade).
//! * [`imaging`]: image ingest, time grouping, tiling.
//! * [`features`]: built-in corner detector/matcher, match CSV, feature tracks.
//! * [`sfm`]: incremental affine SfM and robust bundle adjustment.
//! * [`dense`]: rectify + stereo match + dense tracks + densification.
//! * [`euclidean`]: GCP-based upgrade, ICP alignment and group fusion.
//! * [`evaluation`]: DEM rasterization and height-error metrics.
//! * [`synthetic`]: pushbroom scene generator used as ground truth.
//! * [`pipeline`]: staged on-disk workflow driven by the `tilerecon` binary.

pub mod dense;
pub mod euclidean;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod sfm;
pub mod synthetic;

#[cfg(test)]
mod test_support;

pub use geometry::{
    AffineCamera, AffineFundamental, AffineUpgrade, Correspondence2D2D, Correspondence2D3D,
    GeometryError, Point2, Point3, RansacConfig, RectifyingPair,
};
