use serde::{Deserialize, Serialize};

use super::{project_pushbroom, PushbroomCamera, SyntheticError};
use crate::geometry::{resect_camera, AffineCamera, Correspondence2D3D, Point3};

/// Axis-aligned box of scene space, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl Region {
    /// Square of side `side` centred on `(cx, cy)`.
    pub fn square(cx: f64, cy: f64, side: f64, z: (f64, f64)) -> Self {
        Self {
            x: (cx - side / 2.0, cx + side / 2.0),
            y: (cy - side / 2.0, cy + side / 2.0),
            z,
        }
    }

    /// `n x n` horizontal grid with heights cycling through five levels of
    /// the z range, so the samples span the volume.
    pub fn samples(&self, n: usize) -> Vec<Point3> {
        let lerp = |(a, b): (f64, f64), t: f64| a + (b - a) * t;
        let step = |k: usize| if n > 1 { k as f64 / (n - 1) as f64 } else { 0.5 };
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let level = ((7 * i + 3 * j) % 5) as f64 / 4.0;
                out.push(Point3::new(lerp(self.x, step(i)), lerp(self.y, step(j)), lerp(self.z, level)));
            }
        }
        out
    }
}

/// Best-fit affine camera for `cam` over `region` (least-squares resection
/// on exact projections of an `n x n` sample grid) and its RMS residual in
/// pixels.
pub fn affine_fit_residual(
    cam: &PushbroomCamera,
    region: &Region,
    samples: usize,
) -> Result<(AffineCamera, f64), SyntheticError> {
    let pts = region.samples(samples.max(2));
    let corrs = pts
        .iter()
        .map(|p| project_pushbroom(cam, p).map(|q| Correspondence2D3D::new(q, *p)))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = resect_camera(&corrs)?;
    let sq: f64 = corrs.iter().map(|c| fit.project(&c.point).distance(&c.pixel).powi(2)).sum();
    Ok((fit, (sq / corrs.len() as f64).sqrt()))
}
