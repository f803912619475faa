use serde::{Deserialize, Serialize};

use super::{lower_median, DemGrid, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemAlignment {
    /// The test grid resampled onto the truth frame, shifted and offset.
    pub aligned: DemGrid,
    /// Cells: `test(col + dx, row + dy) - dz` lines up with `truth(col, row)`.
    pub dx: i64,
    pub dy: i64,
    pub dz: f64,
    /// Median `|dh - dz|` at the chosen shift.
    pub score: f64,
}

/// Whole-cell offset of `test`'s frame relative to `truth`'s.
fn frame_offset(test: &DemGrid, truth: &DemGrid) -> Result<(i64, i64), EvalError> {
    if test.cell != truth.cell {
        return Err(EvalError::GridMismatch(format!("cell {} vs {}", test.cell, truth.cell)));
    }
    let ox = (truth.origin.0 - test.origin.0) / truth.cell;
    let oy = (truth.origin.1 - test.origin.1) / truth.cell;
    if (ox - ox.round()).abs() > 1e-9 || (oy - oy.round()).abs() > 1e-9 {
        return Err(EvalError::GridMismatch("origins differ by a fraction of a cell".into()));
    }
    Ok((ox.round() as i64, oy.round() as i64))
}

/// `(median |dh - m|, m, overlap)` of the height differences at shift
/// `(dx, dy)`, where `m` is their median; `None` without overlap.
pub fn shift_score(test: &DemGrid, truth: &DemGrid, dx: i64, dy: i64) -> Result<Option<(f64, f64, usize)>, EvalError> {
    let (ox, oy) = frame_offset(test, truth)?;
    let mut diffs = Vec::new();
    for row in 0..truth.height {
        for col in 0..truth.width {
            let (Some(g), Some(t)) = (truth.get(col, row), test.get_signed(col as i64 + ox + dx, row as i64 + oy + dy)) else {
                continue;
            };
            diffs.push(t - g);
        }
    }
    let n = diffs.len();
    let Some(m) = lower_median(&mut diffs) else {
        return Ok(None);
    };
    let mut dev: Vec<f64> = diffs.iter().map(|d| (d - m).abs()).collect();
    Ok(lower_median(&mut dev).map(|s| (s, m, n)))
}

/// Exhaustive search over whole-cell shifts within `search` cells. Each
/// shift is scored by the median absolute height difference after removing
/// the median offset; ties go to the smaller shift, then to the smaller
/// `(dx, dy)`.
pub fn align_dems(test: &DemGrid, truth: &DemGrid, search: usize) -> Result<DemAlignment, EvalError> {
    let (ox, oy) = frame_offset(test, truth)?;
    let s = search as i64;
    let mut best: Option<(f64, i64, i64, i64, f64)> = None;
    for dx in -s..=s {
        for dy in -s..=s {
            let Some((score, m, _)) = shift_score(test, truth, dx, dy)? else {
                continue;
            };
            let cand = (score, dx.abs() + dy.abs(), dx, dy, m);
            let better = match best {
                None => true,
                Some(b) => (cand.0, cand.1, cand.2, cand.3) < (b.0, b.1, b.2, b.3),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    let (score, _, dx, dy, dz) = best.ok_or(EvalError::NoOverlap)?;
    let mut aligned = DemGrid::empty(truth.origin, truth.cell, truth.width, truth.height)?;
    for row in 0..truth.height {
        for col in 0..truth.width {
            let h = test.get_signed(col as i64 + ox + dx, row as i64 + oy + dy).map(|h| h - dz);
            aligned.set(col, row, h);
        }
    }
    Ok(DemAlignment {
        aligned,
        dx,
        dy,
        dz,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::rng;
    use rand::Rng;

    fn random_grid(seed: u64, w: usize, h: usize) -> DemGrid {
        let mut r = rng(seed);
        DemGrid {
            origin: (100.0, 200.0),
            cell: 0.5,
            width: w,
            height: h,
            heights: (0..w * h).map(|_| Some(r.random_range(0.0..30.0))).collect(),
        }
    }

    /// `out(col, row) = g(col - dx, row - dy) + dz`.
    fn shifted(g: &DemGrid, dx: i64, dy: i64, dz: f64) -> DemGrid {
        let mut out = DemGrid::empty(g.origin, g.cell, g.width, g.height).unwrap();
        for row in 0..g.height {
            for col in 0..g.width {
                out.set(col, row, g.get_signed(col as i64 - dx, row as i64 - dy).map(|h| h + dz));
            }
        }
        out
    }

    #[test]
    fn identical_grids_need_no_shift() {
        let g = random_grid(1, 20, 15);
        let a = align_dems(&g, &g, 3).unwrap();
        assert_eq!((a.dx, a.dy, a.dz), (0, 0, 0.0));
        assert_eq!(a.aligned, g);
    }

    #[test]
    fn planted_shift_recovered() {
        let g = random_grid(2, 24, 24);
        let test = shifted(&g, 2, -1, 0.7);
        let a = align_dems(&test, &g, 3).unwrap();
        assert_eq!((a.dx, a.dy), (2, -1));
        assert!((a.dz - 0.7).abs() <= 1e-12);
        assert!(a.score <= 1e-12);
    }

    #[test]
    fn zero_search_only_offsets_heights() {
        let g = random_grid(3, 10, 10);
        let test = shifted(&g, 0, 0, -1.25);
        let a = align_dems(&test, &g, 0).unwrap();
        assert_eq!((a.dx, a.dy), (0, 0));
        assert!((a.dz + 1.25).abs() <= 1e-12);
    }

    #[test]
    fn chosen_shift_is_optimal() {
        let truth = random_grid(4, 9, 9);
        let test = random_grid(5, 9, 9);
        let a = align_dems(&test, &truth, 2).unwrap();
        for dx in -2..=2 {
            for dy in -2..=2 {
                let (s, _, _) = shift_score(&test, &truth, dx, dy).unwrap().unwrap();
                assert!(a.score <= s);
            }
        }
    }

    #[test]
    fn empty_overlap_and_cell_mismatch() {
        let g = random_grid(6, 4, 4);
        let empty = DemGrid::empty(g.origin, g.cell, 4, 4).unwrap();
        assert_eq!(align_dems(&empty, &g, 1).unwrap_err().kind(), "NoOverlap");
        let mut coarse = g.clone();
        coarse.cell = 1.0;
        assert_eq!(align_dems(&coarse, &g, 1).unwrap_err().kind(), "GridMismatch");
    }

    #[test]
    fn frames_offset_by_whole_cells() {
        let g = random_grid(7, 12, 12);
        let mut moved = g.clone();
        moved.origin = (g.origin.0 - 2.0 * g.cell, g.origin.1 + g.cell);
        // Same heights placed two cells east and one cell south.
        let a = align_dems(&moved, &g, 3).unwrap();
        assert_eq!((a.dx, a.dy), (-2, 1));
    }
}
