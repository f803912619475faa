//! Geometric estimators for affine cameras.
//!
//! Everything here is a pure function of its inputs. Robust variants take an
//! explicit [`RansacConfig`] whose seed fully determines the result.

mod epipolar;
mod factorization;
mod linalg;
mod ransac;
mod resection;
mod triangulation;
mod types;
mod upgrade;

pub use epipolar::{
    epipolar_residual, estimate_affine_fundamental, estimate_affine_fundamental_ransac,
    rectify_pair, AffineTransform2, RectifyingPair,
};
pub use factorization::{factorize_two_view, TwoViewFactorization};
pub use ransac::{RansacConfig, RansacOutcome};
pub use resection::{resect_camera, resect_camera_ransac};
pub use triangulation::triangulate_multiview;
pub use types::{
    project_affine, AffineCamera, AffineFundamental, Correspondence2D2D, Correspondence2D3D,
    Point2, Point3,
};
pub use upgrade::{apply_upgrade, fit_affine_upgrade, fit_affine_upgrade_ransac, AffineUpgrade};

use thiserror::Error;

/// A configuration is degenerate when the ratio of the smallest relevant
/// singular value to the largest falls below this constant.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// The linear system is (numerically) rank deficient.
    #[error("degenerate configuration in {context}: singular value ratio {ratio:.3e} below {RANK_TOLERANCE:e}")]
    DegenerateConfiguration { context: &'static str, ratio: f64 },
    /// Epipolar direction undefined, or the transform would not be invertible.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("insufficient inliers: found {found}, need {required}")]
    InsufficientInliers { found: usize, required: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl GeometryError {
    /// Stable name of the error kind, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            GeometryError::DegenerateConfiguration { .. } => "DegenerateConfiguration",
            GeometryError::DegenerateGeometry(_) => "DegenerateGeometry",
            GeometryError::InsufficientInliers { .. } => "InsufficientInliers",
            GeometryError::InvalidInput(_) => "InvalidInput",
        }
    }
}

/// Ratio of the `k`-th singular value (0-based, descending) to the largest.
/// Empty or all-zero spectra count as fully degenerate.
pub(crate) fn singular_ratio(values: &nalgebra::DVector<f64>, k: usize) -> f64 {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 || !max.is_finite() || k >= values.len() {
        return 0.0;
    }
    values[k] / max
}
