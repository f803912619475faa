use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::SyntheticError;
use crate::geometry::{Point2, Point3};

/// Cross-track projection of a pushbroom line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CrossTrack {
    /// `col = c0 + focal * (D . b1) / (D . b2)`.
    Perspective,
    /// `col = c0 + focal * (D . b1) / depth`: no perspective term, which
    /// makes the whole camera exactly affine.
    Orthographic { depth: f64 },
}

/// Linear pushbroom sensor. Row `r` is captured from `start + r *
/// velocity` and images the plane through that position spanned by the
/// cross-track axis `b1` and viewing direction `b2`; `b0` (the plane normal)
/// completes the orthonormal `basis`, whose rows are `b0, b1, b2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushbroomCamera {
    pub start: Point3,
    /// Metres per row.
    pub velocity: Vector3<f64>,
    pub basis: Matrix3<f64>,
    /// Pixels.
    pub focal: f64,
    pub principal_col: f64,
    pub rows: usize,
    pub cols: usize,
    pub cross_track: CrossTrack,
}

impl PushbroomCamera {
    pub fn b0(&self) -> Vector3<f64> {
        self.basis.row(0).transpose()
    }

    pub fn b1(&self) -> Vector3<f64> {
        self.basis.row(1).transpose()
    }

    pub fn b2(&self) -> Vector3<f64> {
        self.basis.row(2).transpose()
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let gram = self.basis * self.basis.transpose();
        if (gram - Matrix3::identity()).abs().max() > 1e-9 {
            return Err(SyntheticError::ConfigError("camera basis is not orthonormal".into()));
        }
        if self.velocity.dot(&self.b0()).abs() < 1e-12 {
            return Err(SyntheticError::ConfigError("velocity lies in the view plane".into()));
        }
        if !(self.focal > 0.0) || self.rows == 0 || self.cols == 0 {
            return Err(SyntheticError::ConfigError("focal and image size must be positive".into()));
        }
        if let CrossTrack::Orthographic { depth } = self.cross_track {
            if !(depth > 0.0) {
                return Err(SyntheticError::ConfigError("orthographic depth must be positive".into()));
            }
        }
        Ok(())
    }

    /// Camera over ground point `center` flying along `heading` (radians
    /// from +x) at `altitude`, with the view tilted by `tilt_along` about
    /// the cross-track axis (positive looks forward) and `tilt_across` about
    /// the flight axis. `gsd` is the nadir-equivalent ground sample distance
    /// in both directions at `center`, which lands on the image centre.
    #[allow(clippy::too_many_arguments)]
    pub fn over(
        center: Point3,
        heading: f64,
        altitude: f64,
        tilt_along: f64,
        tilt_across: f64,
        gsd: f64,
        rows: usize,
        cols: usize,
        perspective: bool,
    ) -> Self {
        let flight = Vector3::new(heading.cos(), heading.sin(), 0.0);
        let side = Vector3::new(-heading.sin(), heading.cos(), 0.0);
        let view = (-Vector3::z() + flight * tilt_along.tan() + side * tilt_across.tan()).normalize();
        let b1 = (side - view * side.dot(&view)).normalize();
        let b0 = view.cross(&b1);
        let basis = Matrix3::from_rows(&[b0.transpose(), b1.transpose(), view.transpose()]);
        let range = altitude / -view.z;
        let velocity = flight * gsd;
        let mid = center.to_vector() - view * range;
        let start = mid - velocity * (rows as f64 / 2.0);
        let focal = range / gsd;
        Self {
            start: Point3::from_vector(&start),
            velocity,
            basis,
            focal,
            principal_col: cols as f64 / 2.0,
            rows,
            cols,
            cross_track: if perspective {
                CrossTrack::Perspective
            } else {
                CrossTrack::Orthographic { depth: range }
            },
        }
    }

    /// Ray `(origin, direction)` through the centre of pixel `(row, col)`;
    /// `direction` points away from the sensor.
    pub fn pixel_ray(&self, row: f64, col: f64) -> (Vector3<f64>, Vector3<f64>) {
        let p = self.start.to_vector() + self.velocity * row;
        let off = (col - self.principal_col) / self.focal;
        match self.cross_track {
            CrossTrack::Perspective => (p, self.b1() * off + self.b2()),
            CrossTrack::Orthographic { depth } => (p + self.b1() * (off * depth), self.b2()),
        }
    }
}

/// Image position `(col, row)` of `x`; sub-pixel in both coordinates.
pub fn project_pushbroom(cam: &PushbroomCamera, x: &Point3) -> Result<Point2, SyntheticError> {
    let rel = x.to_vector() - cam.start.to_vector();
    let row = rel.dot(&cam.b0()) / cam.velocity.dot(&cam.b0());
    if !(row >= 0.0 && row < cam.rows as f64) {
        return Err(SyntheticError::BehindSensor);
    }
    let d = rel - cam.velocity * row;
    let depth = match cam.cross_track {
        CrossTrack::Perspective => d.dot(&cam.b2()),
        CrossTrack::Orthographic { depth } => depth,
    };
    if !(depth > 0.0) {
        return Err(SyntheticError::BehindSensor);
    }
    Ok(Point2::new(cam.principal_col + cam.focal * d.dot(&cam.b1()) / depth, row))
}
