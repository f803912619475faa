use nalgebra::{DMatrix, Matrix2x3, Vector2};

use super::types::{AffineCamera, Correspondence2D2D, Point3};
use super::linalg::ThinSvd;
use super::{singular_ratio, GeometryError, RANK_TOLERANCE};

/// Result of the closed-form two-view affine factorization.
#[derive(Debug, Clone)]
pub struct TwoViewFactorization {
    pub camera_i: AffineCamera,
    pub camera_j: AffineCamera,
    pub points: Vec<Point3>,
    /// Singular values of the centered 4xn measurement matrix, descending.
    /// Missing trailing values (n < 4) are reported as zero.
    pub singular_values: [f64; 4],
    /// Total squared reprojection residual of the rank-3 fit.
    pub residual_sq: f64,
}

/// Rank-3 factorization of two views.
///
/// The translations are the observation centroids. The centered coordinates
/// are stacked into a 4xn matrix `W = U D V^T`; the stacked linear parts are
/// `[s1*u1, s2*u2, s3*u3]` and the points are the first three rows of `V^T`.
/// The residual of this fit is `s4^2` by the Eckart-Young theorem.
pub fn factorize_two_view(
    corrs: &[Correspondence2D2D],
) -> Result<TwoViewFactorization, GeometryError> {
    let n = corrs.len();
    if n == 0 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "two-view factorization",
            ratio: 0.0,
        });
    }
    if corrs.iter().any(|c| !c.a.is_finite() || !c.b.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite correspondence".into()));
    }
    let inv_n = 1.0 / n as f64;
    let ci = corrs.iter().fold(Vector2::zeros(), |acc, c| acc + c.a.to_vector()) * inv_n;
    let cj = corrs.iter().fold(Vector2::zeros(), |acc, c| acc + c.b.to_vector()) * inv_n;

    // Rows of W^T are the centered 4-vectors (x_i, y_i, x_j, y_j).
    let wt = DMatrix::from_fn(n, 4, |k, col| match col {
        0 => corrs[k].a.x - ci.x,
        1 => corrs[k].a.y - ci.y,
        2 => corrs[k].b.x - cj.x,
        _ => corrs[k].b.y - cj.y,
    });
    let svd = ThinSvd::new(&wt);
    let ratio = singular_ratio(&svd.s, 2);
    if ratio < RANK_TOLERANCE {
        return Err(GeometryError::DegenerateConfiguration {
            context: "two-view factorization",
            ratio,
        });
    }
    // W^T = U' S V'^T, hence W = V' S U'^T.
    let u_points = &svd.u;
    let s = &svd.s;

    let motion = |row: usize, k: usize| s[k] * svd.v[(row, k)];
    let camera_i = AffineCamera {
        m: Matrix2x3::from_fn(motion),
        t: ci,
    };
    let camera_j = AffineCamera {
        m: Matrix2x3::from_fn(|r, k| motion(r + 2, k)),
        t: cj,
    };
    let points: Vec<Point3> = (0..n)
        .map(|k| Point3::new(u_points[(k, 0)], u_points[(k, 1)], u_points[(k, 2)]))
        .collect();

    let mut singular_values = [0.0; 4];
    for (slot, v) in singular_values.iter_mut().zip(s.iter()) {
        *slot = *v;
    }
    let residual_sq = corrs
        .iter()
        .zip(&points)
        .map(|(c, x)| {
            let pi = camera_i.project(x);
            let pj = camera_j.project(x);
            (pi.x - c.a.x).powi(2)
                + (pi.y - c.a.y).powi(2)
                + (pj.x - c.b.x).powi(2)
                + (pj.y - c.b.y).powi(2)
        })
        .sum();

    Ok(TwoViewFactorization {
        camera_i,
        camera_j,
        points,
        singular_values,
        residual_sq,
    })
}
