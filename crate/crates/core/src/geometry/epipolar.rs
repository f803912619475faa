use nalgebra::{DMatrix, Matrix2, Matrix2x3, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::ransac::{run_ransac, RansacConfig, RansacOutcome};
use super::types::{AffineFundamental, Correspondence2D2D, Point2};
use super::linalg::ThinSvd;
use super::{singular_ratio, GeometryError, RANK_TOLERANCE};

/// Closed-form maximum-likelihood affine fundamental matrix.
///
/// The centered joint vectors `(x_i, y_i, x_j, y_j)` lie on a hyperplane; its
/// normal is the right singular vector with the smallest singular value and
/// gives `(a, b, c, d)`. The offset `e` places the hyperplane through the
/// centroid.
pub fn estimate_affine_fundamental(
    corrs: &[Correspondence2D2D],
) -> Result<AffineFundamental, GeometryError> {
    let n = corrs.len();
    if corrs.iter().any(|c| !c.a.is_finite() || !c.b.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite correspondence".into()));
    }
    if n < 4 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "affine fundamental",
            ratio: 0.0,
        });
    }
    let joint = |c: &Correspondence2D2D| Vector4::new(c.a.x, c.a.y, c.b.x, c.b.y);
    let centroid = corrs.iter().fold(Vector4::zeros(), |acc, c| acc + joint(c)) / n as f64;
    let w = DMatrix::from_fn(n, 4, |k, j| joint(&corrs[k])[j] - centroid[j]);
    let svd = ThinSvd::new(&w);
    let ratio = singular_ratio(&svd.s, 2);
    if ratio < RANK_TOLERANCE {
        return Err(GeometryError::DegenerateConfiguration {
            context: "affine fundamental",
            ratio,
        });
    }
    let normal = Vector4::from_fn(|j, _| svd.v[(j, 3)]);
    let e = -normal.dot(&centroid);
    Ok(AffineFundamental::from_coefficients(
        normal[0], normal[1], normal[2], normal[3], e,
    ))
}

/// Symmetric epipolar distance in pixels: the mean of the distances of each
/// point to the epipolar line induced by the other.
pub fn epipolar_residual(f: &AffineFundamental, c: &Correspondence2D2D) -> f64 {
    let [a, b, cc, d, _] = f.coefficients();
    let r = f.algebraic_residual(&c.a, &c.b).abs();
    let ni = a.hypot(b);
    let nj = cc.hypot(d);
    if ni == 0.0 || nj == 0.0 {
        return f64::INFINITY;
    }
    0.5 * (r / ni + r / nj)
}

/// RANSAC wrapper with inlier test `epipolar_residual <= threshold`.
pub fn estimate_affine_fundamental_ransac(
    corrs: &[Correspondence2D2D],
    cfg: &RansacConfig,
) -> Result<RansacOutcome<AffineFundamental>, GeometryError> {
    run_ransac(corrs, cfg, estimate_affine_fundamental, epipolar_residual)
}

/// 2D affine map `p -> linear * p + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2 {
    pub linear: Matrix2<f64>,
    pub offset: Vector2<f64>,
}

impl AffineTransform2 {
    pub fn identity() -> Self {
        Self {
            linear: Matrix2::identity(),
            offset: Vector2::zeros(),
        }
    }

    pub fn apply(&self, p: &Point2) -> Point2 {
        Point2::from_vector(&(self.linear * p.to_vector() + self.offset))
    }

    pub fn inverse(&self) -> Option<Self> {
        let inv = self.linear.try_inverse()?;
        Some(Self {
            linear: inv,
            offset: -(inv * self.offset),
        })
    }

    /// Appends a translation applied after this transform.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            linear: self.linear,
            offset: self.offset + Vector2::new(dx, dy),
        }
    }

    /// `[linear | offset]` as a 2x3 matrix.
    pub fn to_matrix(&self) -> Matrix2x3<f64> {
        Matrix2x3::new(
            self.linear[(0, 0)],
            self.linear[(0, 1)],
            self.offset[0],
            self.linear[(1, 0)],
            self.linear[(1, 1)],
            self.offset[1],
        )
    }
}

/// Transforms mapping tile `i` and tile `j` pixels into a common frame in
/// which corresponding points share the same row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectifyingPair {
    pub h_i: AffineTransform2,
    pub h_j: AffineTransform2,
}

/// Rectifying transforms from an affine fundamental matrix.
///
/// Tile `i` is rotated so its epipolar direction becomes horizontal, with the
/// new row coordinate `(a x + b y) / |(a, b)|`. Tile `j` gets a rotation and
/// uniform scale onto `-(c x + d y + e) / |(a, b)|`, so that the difference
/// of the two rows equals the algebraic epipolar residual divided by
/// `|(a, b)|` and vanishes for consistent correspondences. Signs are fixed so
/// that `b > 0` (or `a > 0` when `b == 0`).
pub fn rectify_pair(f: &AffineFundamental) -> Result<RectifyingPair, GeometryError> {
    let [mut a, mut b, mut c, mut d, mut e] = f.coefficients();
    if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite() && e.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite fundamental matrix".into()));
    }
    let scale = (a * a + b * b + c * c + d * d + e * e).sqrt();
    let ni = a.hypot(b);
    let nj = c.hypot(d);
    if ni <= RANK_TOLERANCE * scale || nj <= RANK_TOLERANCE * scale {
        return Err(GeometryError::DegenerateGeometry(format!(
            "epipolar direction undefined (|(a,b)| = {ni:.3e}, |(c,d)| = {nj:.3e})"
        )));
    }
    if b < 0.0 || (b == 0.0 && a < 0.0) {
        a = -a;
        b = -b;
        c = -c;
        d = -d;
        e = -e;
    }
    let ui = Vector2::new(a, b) / ni;
    let h_i = AffineTransform2 {
        linear: Matrix2::new(ui.y, -ui.x, ui.x, ui.y),
        offset: Vector2::zeros(),
    };
    let mj = Vector2::new(-c, -d) / nj;
    let s = nj / ni;
    let h_j = AffineTransform2 {
        linear: Matrix2::new(mj.y, -mj.x, mj.x, mj.y) * s,
        offset: Vector2::new(0.0, -e / ni),
    };
    Ok(RectifyingPair { h_i, h_j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AffineCamera, Point3};
    use crate::test_support::{random_camera, random_points, rng};
    use rand_distr::{Distribution, Normal};

    fn synth(seed: u64, n: usize) -> (AffineCamera, AffineCamera, Vec<Correspondence2D2D>) {
        let mut r = rng(seed);
        let ci = random_camera(&mut r);
        let cj = random_camera(&mut r);
        let corrs = random_points(&mut r, n)
            .iter()
            .map(|p| Correspondence2D2D::new(ci.project(p), cj.project(p)))
            .collect();
        (ci, cj, corrs)
    }

    #[test]
    fn noiseless_residuals_vanish() {
        for seed in 0..10 {
            let (_, _, corrs) = synth(seed, 60);
            let f = estimate_affine_fundamental(&corrs).unwrap();
            assert_eq!(f.f.fixed_view::<2, 2>(0, 0).norm(), 0.0);
            assert!((f.f.norm() - 1.0).abs() < 1e-12);
            for c in &corrs {
                assert!(f.algebraic_residual(&c.a, &c.b).abs() <= 1e-9);
            }
            let mean: f64 =
                corrs.iter().map(|c| epipolar_residual(&f, c)).sum::<f64>() / corrs.len() as f64;
            assert!(mean <= 1e-9);
        }
    }

    #[test]
    fn swapping_views_transposes() {
        let (_, _, corrs) = synth(3, 30);
        let f = estimate_affine_fundamental(&corrs).unwrap();
        let swapped: Vec<_> = corrs.iter().map(|c| c.swapped()).collect();
        let g = estimate_affine_fundamental(&swapped).unwrap();
        let t = f.transposed().f;
        let diff = (g.f - t).norm().min((g.f + t).norm());
        assert!(diff <= 1e-9);
    }

    #[test]
    fn four_correspondences_exact() {
        let corrs = vec![
            Correspondence2D2D::new(Point2::new(0.0, 0.0), Point2::new(3.0, 1.0)),
            Correspondence2D2D::new(Point2::new(10.0, 2.0), Point2::new(11.0, 5.0)),
            Correspondence2D2D::new(Point2::new(4.0, 9.0), Point2::new(2.0, 17.0)),
            Correspondence2D2D::new(Point2::new(-3.0, 5.0), Point2::new(8.0, -2.0)),
        ];
        let f = estimate_affine_fundamental(&corrs).unwrap();
        for c in &corrs {
            assert!(f.algebraic_residual(&c.a, &c.b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_views_degenerate() {
        let pts: Vec<_> = (0..20)
            .map(|k| Point2::new((k * 7 % 13) as f64, (k * 5 % 11) as f64))
            .collect();
        let corrs: Vec<_> = pts.iter().map(|p| Correspondence2D2D::new(*p, *p)).collect();
        assert!(matches!(
            estimate_affine_fundamental(&corrs),
            Err(GeometryError::DegenerateConfiguration { .. })
        ));
    }

    #[test]
    fn rectification_aligns_rows() {
        for seed in 0..20 {
            let (_, _, corrs) = synth(50 + seed, 80);
            let f = estimate_affine_fundamental(&corrs).unwrap();
            let pair = rectify_pair(&f).unwrap();
            assert!(pair.h_i.linear.determinant().abs() > 0.0);
            assert!(pair.h_j.linear.determinant().abs() > 0.0);
            for c in &corrs {
                let dy = pair.h_i.apply(&c.a).y - pair.h_j.apply(&c.b).y;
                assert!(dy.abs() <= 1e-6, "seed {seed}: {dy}");
            }
        }
    }

    #[test]
    fn horizontal_epipolar_lines_keep_rows() {
        // y_j = y_i: epipolar lines already horizontal and aligned.
        let f = AffineFundamental::from_coefficients(0.0, 1.0, 0.0, -1.0, 0.0);
        let pair = rectify_pair(&f).unwrap();
        for p in [Point2::new(3.0, 4.0), Point2::new(-7.5, 100.25)] {
            assert!((pair.h_i.apply(&p).y - p.y).abs() <= 1e-9);
            assert!((pair.h_j.apply(&p).y - p.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn undefined_direction_rejected() {
        let f = AffineFundamental::from_coefficients(0.0, 0.0, 1.0, 0.5, 2.0);
        assert!(matches!(rectify_pair(&f), Err(GeometryError::DegenerateGeometry(_))));
    }

    #[test]
    fn noisy_rectification_vertical_disparity() {
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut within = 0;
        let mut total = 0;
        for seed in 0..20 {
            let mut r = rng(900 + seed);
            let ci = random_camera(&mut r);
            let cj = random_camera(&mut r);
            let pts: Vec<Point3> = random_points(&mut r, 100);
            let corrs: Vec<_> = pts
                .iter()
                .map(|p| {
                    let a = ci.project(p);
                    let b = cj.project(p);
                    Correspondence2D2D::new(
                        Point2::new(a.x + noise.sample(&mut r), a.y + noise.sample(&mut r)),
                        Point2::new(b.x + noise.sample(&mut r), b.y + noise.sample(&mut r)),
                    )
                })
                .collect();
            let pair = rectify_pair(&estimate_affine_fundamental(&corrs).unwrap()).unwrap();
            for c in &corrs {
                total += 1;
                if (pair.h_i.apply(&c.a).y - pair.h_j.apply(&c.b).y).abs() <= 1.5 {
                    within += 1;
                }
            }
        }
        assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");
    }

    #[test]
    fn ransac_rejects_planted_mismatches() {
        let (_, _, mut corrs) = synth(77, 80);
        for c in corrs.iter_mut().take(20) {
            c.b.y += 40.0;
            c.b.x -= 15.0;
        }
        let out = estimate_affine_fundamental_ransac(&corrs, &RansacConfig::default()).unwrap();
        assert!(out.inliers[20..].iter().all(|&b| b));
        assert!(out.inliers[..20].iter().filter(|&&b| b).count() <= 2);
    }

    #[test]
    fn transform_inverse_round_trip() {
        let t = AffineTransform2 {
            linear: Matrix2::new(0.8, -0.6, 0.6, 0.8) * 1.3,
            offset: Vector2::new(4.0, -2.0),
        };
        let p = Point2::new(12.5, -3.25);
        let q = t.inverse().unwrap().apply(&t.apply(&p));
        assert!(q.distance(&p) <= 1e-12);
    }
}
