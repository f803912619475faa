use nalgebra::{DMatrix, Matrix2x3, Vector2, Vector3};

use super::ransac::{run_ransac, RansacConfig, RansacOutcome};
use super::types::{AffineCamera, Correspondence2D3D};
use super::linalg::ThinSvd;
use super::{singular_ratio, GeometryError, RANK_TOLERANCE};

/// Linear least-squares affine camera from 2D-3D correspondences.
///
/// Both sides are centered first, which decouples `t` from `m`; each image
/// row of `m` is then an ordinary 3-parameter least-squares problem sharing
/// one design matrix.
pub fn resect_camera(corrs: &[Correspondence2D3D]) -> Result<AffineCamera, GeometryError> {
    let n = corrs.len();
    if corrs.iter().any(|c| !c.pixel.is_finite() || !c.point.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite correspondence".into()));
    }
    if n < 4 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "resection",
            ratio: 0.0,
        });
    }
    let inv_n = 1.0 / n as f64;
    let xbar = corrs.iter().fold(Vector3::zeros(), |acc, c| acc + c.point.to_vector()) * inv_n;
    let pbar = corrs.iter().fold(Vector2::zeros(), |acc, c| acc + c.pixel.to_vector()) * inv_n;

    let design = DMatrix::from_fn(n, 3, |k, j| corrs[k].point.to_vector()[j] - xbar[j]);
    let rhs = DMatrix::from_fn(n, 2, |k, j| corrs[k].pixel.to_vector()[j] - pbar[j]);
    let svd = ThinSvd::new(&design);
    let ratio = singular_ratio(&svd.s, 2);
    if ratio < RANK_TOLERANCE {
        return Err(GeometryError::DegenerateConfiguration {
            context: "resection",
            ratio,
        });
    }
    let sol = svd.solve(&rhs);
    // sol is 3x2: column r holds image row r of m.
    let m = Matrix2x3::from_fn(|r, j| sol[(j, r)]);
    let t = pbar - m * xbar;
    Ok(AffineCamera { m, t })
}

/// Reprojection error of a correspondence under `camera`.
pub(crate) fn reprojection_error(camera: &AffineCamera, c: &Correspondence2D3D) -> f64 {
    camera.project(&c.point).distance(&c.pixel)
}

/// RANSAC resection with inlier test `reprojection error <= threshold`.
pub fn resect_camera_ransac(
    corrs: &[Correspondence2D3D],
    cfg: &RansacConfig,
) -> Result<RansacOutcome<AffineCamera>, GeometryError> {
    run_ransac(corrs, cfg, resect_camera, reprojection_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Point3};
    use crate::test_support::{random_camera, random_points, rng};
    use rand::Rng;

    fn clean(camera: &AffineCamera, pts: &[Point3]) -> Vec<Correspondence2D3D> {
        pts.iter()
            .map(|p| Correspondence2D3D::new(camera.project(p), *p))
            .collect()
    }

    fn max_param_diff(a: &AffineCamera, b: &AffineCamera) -> f64 {
        a.to_params()
            .iter()
            .zip(b.to_params().iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn four_points_exact() {
        let truth = AffineCamera::new(
            Matrix2x3::new(2.0, 0.1, -0.3, 0.2, 1.8, 0.4),
            Vector2::new(5.0, -7.0),
        )
        .unwrap();
        let pts = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let cam = resect_camera(&clean(&truth, &pts)).unwrap();
        assert!(max_param_diff(&cam, &truth) <= 1e-9);
    }

    #[test]
    fn fifty_noiseless_points() {
        let mut r = rng(5);
        let truth = random_camera(&mut r);
        let cam = resect_camera(&clean(&truth, &random_points(&mut r, 50))).unwrap();
        assert!(max_param_diff(&cam, &truth) <= 1e-9);
    }

    #[test]
    fn coplanar_points_degenerate() {
        let mut r = rng(6);
        let truth = random_camera(&mut r);
        let pts: Vec<Point3> = random_points(&mut r, 20)
            .into_iter()
            .map(|p| Point3::new(p.x, p.y, 3.0))
            .collect();
        assert!(matches!(
            resect_camera(&clean(&truth, &pts)),
            Err(GeometryError::DegenerateConfiguration { .. })
        ));
    }

    #[test]
    fn ransac_clean_matches_direct_fit() {
        let mut r = rng(7);
        let truth = random_camera(&mut r);
        let corrs = clean(&truth, &random_points(&mut r, 100));
        let out = resect_camera_ransac(&corrs, &RansacConfig::default()).unwrap();
        assert!(out.inliers.iter().all(|&b| b));
        let direct = resect_camera(&corrs).unwrap();
        assert!(max_param_diff(&out.model, &direct) <= 1e-9);
    }

    #[test]
    fn ransac_planted_outliers() {
        for seed in 0..20 {
            let mut r = rng(100 + seed);
            let truth = random_camera(&mut r);
            let mut corrs = clean(&truth, &random_points(&mut r, 70));
            for _ in 0..30 {
                let p = random_points(&mut r, 1)[0];
                let px = Point2::new(r.random_range(-400.0..400.0), r.random_range(-400.0..400.0));
                corrs.push(Correspondence2D3D::new(px, p));
            }
            let cfg = RansacConfig {
                inlier_threshold: 1.0,
                seed,
                ..Default::default()
            };
            let out = resect_camera_ransac(&corrs, &cfg).unwrap();
            assert!(out.inlier_count() >= 70, "seed {seed}");
            let clean_fit = resect_camera(&corrs[..70]).unwrap();
            assert!(max_param_diff(&out.model, &clean_fit) <= 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn ransac_below_floor() {
        let mut r = rng(9);
        let truth = random_camera(&mut r);
        let mut corrs = clean(&truth, &random_points(&mut r, 10));
        for _ in 0..90 {
            let p = random_points(&mut r, 1)[0];
            let px = Point2::new(r.random_range(-400.0..400.0), r.random_range(-400.0..400.0));
            corrs.push(Correspondence2D3D::new(px, p));
        }
        let cfg = RansacConfig {
            inlier_threshold: 1.0,
            min_inlier_ratio: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            resect_camera_ransac(&corrs, &cfg),
            Err(GeometryError::InsufficientInliers { .. })
        ));
    }

    #[test]
    fn ransac_is_reproducible() {
        let mut r = rng(10);
        let truth = random_camera(&mut r);
        let mut corrs = clean(&truth, &random_points(&mut r, 40));
        for c in corrs.iter_mut().take(10) {
            c.pixel.x += 37.0;
        }
        let cfg = RansacConfig { seed: 42, ..Default::default() };
        let a = resect_camera_ransac(&corrs, &cfg).unwrap();
        let b = resect_camera_ransac(&corrs, &cfg).unwrap();
        assert_eq!(a.model.to_params().map(f64::to_bits), b.model.to_params().map(f64::to_bits));
        assert_eq!(a.inliers, b.inliers);
    }
}
