use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::ransac::{run_ransac, RansacConfig, RansacOutcome};
use super::types::Point3;
use super::linalg::ThinSvd;
use super::{singular_ratio, GeometryError, RANK_TOLERANCE};

/// 12-parameter affine map of 3-space stored as a 4x4 matrix with last row
/// `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineUpgrade {
    pub h: Matrix4<f64>,
}

impl AffineUpgrade {
    pub fn identity() -> Self {
        Self { h: Matrix4::identity() }
    }

    pub fn from_parts(linear: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self { h }
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.h.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.h.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.linear() * p.to_vector() + self.translation()))
    }

    pub fn inverse(&self) -> Option<Self> {
        let inv = self.linear().try_inverse()?;
        Some(Self::from_parts(inv, -(inv * self.translation())))
    }
}

/// Maps every point by the upper 3x4 block of `h`, preserving order.
pub fn apply_upgrade(h: &AffineUpgrade, cloud: &[Point3]) -> Vec<Point3> {
    let linear = h.linear();
    let translation = h.translation();
    cloud
        .iter()
        .map(|p| Point3::from_vector(&(linear * p.to_vector() + translation)))
        .collect()
}

/// Least-squares affine map taking the first point of each pair onto the
/// second. Needs at least four pairs whose first points are not coplanar.
pub fn fit_affine_upgrade(pairs: &[(Point3, Point3)]) -> Result<AffineUpgrade, GeometryError> {
    let n = pairs.len();
    if pairs.iter().any(|(a, e)| !a.is_finite() || !e.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite control point".into()));
    }
    if n == 0 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "affine upgrade",
            ratio: 0.0,
        });
    }
    let inv_n = 1.0 / n as f64;
    let abar = pairs.iter().fold(Vector3::zeros(), |acc, (a, _)| acc + a.to_vector()) * inv_n;
    let ebar = pairs.iter().fold(Vector3::zeros(), |acc, (_, e)| acc + e.to_vector()) * inv_n;
    let design = DMatrix::from_fn(n, 3, |k, j| pairs[k].0.to_vector()[j] - abar[j]);
    let rhs = DMatrix::from_fn(n, 3, |k, j| pairs[k].1.to_vector()[j] - ebar[j]);
    let svd = ThinSvd::new(&design);
    let ratio = singular_ratio(&svd.s, 2);
    if ratio < RANK_TOLERANCE {
        return Err(GeometryError::DegenerateConfiguration {
            context: "affine upgrade",
            ratio,
        });
    }
    let sol = svd.solve(&rhs);
    let linear = Matrix3::from_fn(|r, c| sol[(c, r)]);
    Ok(AffineUpgrade::from_parts(linear, ebar - linear * abar))
}

/// RANSAC upgrade fit; inliers satisfy `|H X_A - X_E| <= threshold` in
/// Euclidean units.
pub fn fit_affine_upgrade_ransac(
    pairs: &[(Point3, Point3)],
    cfg: &RansacConfig,
) -> Result<RansacOutcome<AffineUpgrade>, GeometryError> {
    run_ransac(pairs, cfg, fit_affine_upgrade, |h, (a, e)| h.apply(a).distance(e))
}
