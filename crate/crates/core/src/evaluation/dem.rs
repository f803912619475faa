use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::Point3;

/// Regular height grid. Cell `(col, row)` covers
/// `[x0 + col * cell, x0 + (col + 1) * cell) x [y0 + row * cell, ...)`, so
/// row 0 is the southern edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemGrid {
    pub origin: (f64, f64),
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major, `None` for no-data.
    pub heights: Vec<Option<f64>>,
}

impl DemGrid {
    pub fn empty(origin: (f64, f64), cell: f64, width: usize, height: usize) -> Result<Self, EvalError> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(EvalError::InvalidInput(format!("cell size must be > 0, got {cell}")));
        }
        Ok(Self {
            origin,
            cell,
            width,
            height,
            heights: vec![None; width * height],
        })
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.heights[row * self.width + col]
    }

    /// Like [`DemGrid::get`] but `None` outside the grid.
    pub fn get_signed(&self, col: i64, row: i64) -> Option<f64> {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return None;
        }
        self.get(col as usize, row as usize)
    }

    pub fn set(&mut self, col: usize, row: usize, v: Option<f64>) {
        self.heights[row * self.width + col] = v;
    }

    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.cell,
            self.origin.1 + (row as f64 + 0.5) * self.cell,
        )
    }

    pub fn valid_count(&self) -> usize {
        self.heights.iter().filter(|h| h.is_some()).count()
    }

    pub fn same_frame(&self, other: &DemGrid) -> bool {
        self.origin == other.origin && self.cell == other.cell && self.width == other.width && self.height == other.height
    }
}

/// Nearest-point rasterization: every cell takes the height of the cloud
/// point horizontally nearest to its centre, if that point lies strictly
/// closer than one cell size. Equally near points resolve to the higher one.
pub fn rasterize(cloud: &[Point3], origin: (f64, f64), cell: f64, width: usize, height: usize) -> Result<DemGrid, EvalError> {
    let mut dem = DemGrid::empty(origin, cell, width, height)?;
    // Best (squared distance in cell units, height) per cell.
    let mut best: Vec<Option<(f64, f64)>> = vec![None; width * height];
    for p in cloud.iter().filter(|p| p.is_finite()) {
        let u = (p.x - origin.0) / cell;
        let v = (p.y - origin.1) / cell;
        // Centres within one cell of (u, v) have index in [u - 1.5, u + 0.5].
        let c0 = (u - 1.5).ceil().max(0.0);
        let c1 = (u + 0.5).floor().min(width as f64 - 1.0);
        let r0 = (v - 1.5).ceil().max(0.0);
        let r1 = (v + 0.5).floor().min(height as f64 - 1.0);
        if c0 > c1 || r0 > r1 {
            continue;
        }
        for row in r0 as usize..=r1 as usize {
            for col in c0 as usize..=c1 as usize {
                let du = u - (col as f64 + 0.5);
                let dv = v - (row as f64 + 0.5);
                let d2 = du * du + dv * dv;
                if d2 >= 1.0 {
                    continue;
                }
                let slot = &mut best[row * width + col];
                let better = match *slot {
                    None => true,
                    Some((bd, bz)) => d2 < bd || (d2 == bd && p.z > bz),
                };
                if better {
                    *slot = Some((d2, p.z));
                }
            }
        }
    }
    dem.heights = best.into_iter().map(|b| b.map(|(_, z)| z)).collect();
    Ok(dem)
}
