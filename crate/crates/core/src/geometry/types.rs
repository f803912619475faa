use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Image point in pixels: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Scene point. Affine units before the Euclidean upgrade, meters after.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Affine camera `x = m * X + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineCamera {
    pub m: Matrix2x3<f64>,
    pub t: Vector2<f64>,
}

impl AffineCamera {
    /// Builds a camera, rejecting non-finite entries and rank-deficient `m`.
    pub fn new(m: Matrix2x3<f64>, t: Vector2<f64>) -> Result<Self, GeometryError> {
        let camera = Self { m, t };
        if !m.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "camera has non-finite entries".into(),
            ));
        }
        let sv = m.singular_values();
        let ratio = if sv.max() > 0.0 { sv.min() / sv.max() } else { 0.0 };
        if ratio < super::RANK_TOLERANCE {
            return Err(GeometryError::DegenerateConfiguration {
                context: "camera linear part",
                ratio,
            });
        }
        Ok(camera)
    }

    pub fn project(&self, point: &Point3) -> Point2 {
        Point2::from_vector(&(self.m * point.to_vector() + self.t))
    }

    /// Parameters in the order `m00 m01 m02 m10 m11 m12 t0 t1`.
    pub fn to_params(&self) -> [f64; 8] {
        [
            self.m[(0, 0)],
            self.m[(0, 1)],
            self.m[(0, 2)],
            self.m[(1, 0)],
            self.m[(1, 1)],
            self.m[(1, 2)],
            self.t[0],
            self.t[1],
        ]
    }

    pub fn from_params(p: &[f64; 8]) -> Self {
        Self {
            m: Matrix2x3::new(p[0], p[1], p[2], p[3], p[4], p[5]),
            t: Vector2::new(p[6], p[7]),
        }
    }

    /// The same camera seen through a crop whose top-left corner is at
    /// `(col_offset, row_offset)` of the parent frame.
    pub fn cropped(&self, col_offset: f64, row_offset: f64) -> Self {
        Self {
            m: self.m,
            t: self.t - Vector2::new(col_offset, row_offset),
        }
    }

    /// Unit vector spanning the kernel of `m` (the viewing direction).
    pub fn viewing_direction(&self) -> Vector3<f64> {
        let r0 = Vector3::new(self.m[(0, 0)], self.m[(0, 1)], self.m[(0, 2)]);
        let r1 = Vector3::new(self.m[(1, 0)], self.m[(1, 1)], self.m[(1, 2)]);
        r0.cross(&r1).normalize()
    }
}

/// Projects a scene point through an affine camera.
pub fn project_affine(camera: &AffineCamera, point: &Point3) -> Point2 {
    camera.project(point)
}

/// Affine fundamental matrix with the upper-left 2x2 block fixed at zero.
///
/// Layout: `[[0,0,c],[0,0,d],[a,b,e]]`, so that for a correspondence
/// `(x_i, x_j)` the epipolar constraint reads
/// `[x_j;1]^T F [x_i;1] = a*x_i + b*y_i + c*x_j + d*y_j + e = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFundamental {
    pub f: Matrix3<f64>,
}

impl AffineFundamental {
    /// Builds from the five free coefficients, normalized to unit Frobenius norm.
    pub fn from_coefficients(a: f64, b: f64, c: f64, d: f64, e: f64) -> Self {
        let norm = (a * a + b * b + c * c + d * d + e * e).sqrt();
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        Self {
            f: Matrix3::new(0.0, 0.0, c * s, 0.0, 0.0, d * s, a * s, b * s, e * s),
        }
    }

    /// `(a, b, c, d, e)`.
    pub fn coefficients(&self) -> [f64; 5] {
        [
            self.f[(2, 0)],
            self.f[(2, 1)],
            self.f[(0, 2)],
            self.f[(1, 2)],
            self.f[(2, 2)],
        ]
    }

    /// Algebraic residual `[x_j;1]^T F [x_i;1]`.
    pub fn algebraic_residual(&self, xi: &Point2, xj: &Point2) -> f64 {
        let [a, b, c, d, e] = self.coefficients();
        a * xi.x + b * xi.y + c * xj.x + d * xj.y + e
    }

    pub fn transposed(&self) -> Self {
        Self {
            f: self.f.transpose(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence2D2D {
    pub a: Point2,
    pub b: Point2,
}

impl Correspondence2D2D {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence2D3D {
    pub pixel: Point2,
    pub point: Point3,
}

impl Correspondence2D3D {
    pub const fn new(pixel: Point2, point: Point3) -> Self {
        Self { pixel, point }
    }
}
