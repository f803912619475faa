use nalgebra::DMatrix;

use super::types::{AffineCamera, Point2, Point3};
use super::linalg::ThinSvd;
use super::{singular_ratio, GeometryError, RANK_TOLERANCE};

/// Least-squares point from `n >= 2` affine views.
///
/// Solves the stacked system `[M_1; ...; M_n] X = [x_1 - t_1; ...; x_n - t_n]`.
/// For two views this is the exact inverse of the 4x3 system.
pub fn triangulate_multiview(
    cameras: &[AffineCamera],
    observations: &[Point2],
) -> Result<Point3, GeometryError> {
    if cameras.len() != observations.len() {
        return Err(GeometryError::InvalidInput(format!(
            "{} cameras but {} observations",
            cameras.len(),
            observations.len()
        )));
    }
    if observations.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite observation".into()));
    }
    let n = cameras.len();
    if n < 2 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "triangulation",
            ratio: 0.0,
        });
    }
    let a = DMatrix::from_fn(2 * n, 3, |r, c| cameras[r / 2].m[(r % 2, c)]);
    let b = DMatrix::from_fn(2 * n, 1, |r, _| {
        let v = observations[r / 2].to_vector() - cameras[r / 2].t;
        v[r % 2]
    });
    let svd = ThinSvd::new(&a);
    let ratio = singular_ratio(&svd.s, 2);
    if ratio < RANK_TOLERANCE {
        return Err(GeometryError::DegenerateConfiguration {
            context: "triangulation",
            ratio,
        });
    }
    let x = svd.solve(&b);
    Ok(Point3::new(x[0], x[1], x[2]))
}
