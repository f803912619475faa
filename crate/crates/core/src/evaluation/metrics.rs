use serde::{Deserialize, Serialize};

use super::{lower_median, DemGrid, EvalError};

/// Signed per-cell height error `test - truth` on a shared grid frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMap {
    pub origin: (f64, f64),
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    /// `None` wherever either input is no-data.
    pub errors: Vec<Option<f64>>,
    /// Cells where the truth grid has data; the completeness denominator.
    pub truth_valid: Vec<bool>,
}

pub fn error_map(test: &DemGrid, truth: &DemGrid) -> Result<ErrorMap, EvalError> {
    if !test.same_frame(truth) {
        return Err(EvalError::GridMismatch(format!(
            "test {}x{} cell {} at {:?}, truth {}x{} cell {} at {:?}",
            test.width, test.height, test.cell, test.origin, truth.width, truth.height, truth.cell, truth.origin
        )));
    }
    let errors = test
        .heights
        .iter()
        .zip(&truth.heights)
        .map(|(t, g)| match (t, g) {
            (Some(t), Some(g)) => Some(t - g),
            _ => None,
        })
        .collect();
    Ok(ErrorMap {
        origin: truth.origin,
        cell: truth.cell,
        width: truth.width,
        height: truth.height,
        errors,
        truth_valid: truth.heights.iter().map(Option::is_some).collect(),
    })
}

/// Lower median of `|error|` over valid cells, metres.
pub fn median_error(map: &ErrorMap) -> Result<f64, EvalError> {
    let mut abs: Vec<f64> = map.errors.iter().flatten().map(|e| e.abs()).collect();
    lower_median(&mut abs).ok_or(EvalError::EmptyMap)
}

/// Percentage of truth-valid cells whose error magnitude is below
/// `threshold`. Cells missing from the test grid count as incomplete.
pub fn completeness(map: &ErrorMap, threshold: f64) -> Result<f64, EvalError> {
    let denom = map.truth_valid.iter().filter(|&&v| v).count();
    if denom == 0 {
        return Err(EvalError::EmptyMap);
    }
    let good = map.errors.iter().flatten().filter(|e| e.abs() < threshold).count();
    Ok(100.0 * good as f64 / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::rng;
    use rand::Rng;

    fn grid(values: Vec<Option<f64>>, w: usize) -> DemGrid {
        DemGrid {
            origin: (0.0, 0.0),
            cell: 1.0,
            width: w,
            height: values.len() / w,
            heights: values,
        }
    }

    fn map_of(errors: Vec<Option<f64>>) -> ErrorMap {
        ErrorMap {
            origin: (0.0, 0.0),
            cell: 1.0,
            width: errors.len(),
            height: 1,
            truth_valid: vec![true; errors.len()],
            errors,
        }
    }

    #[test]
    fn equal_grids_zero_map() {
        let g = grid(vec![Some(1.0), Some(2.0), None, Some(4.0)], 2);
        let m = error_map(&g, &g).unwrap();
        assert_eq!(m.errors, vec![Some(0.0), Some(0.0), None, Some(0.0)]);
        assert_eq!(completeness(&m, 1.0).unwrap(), 100.0);
        assert_eq!(median_error(&m).unwrap(), 0.0);
    }

    #[test]
    fn no_data_truth_gives_empty_map() {
        let t = grid(vec![Some(1.0); 4], 2);
        let g = grid(vec![None; 4], 2);
        let m = error_map(&t, &g).unwrap();
        assert!(m.errors.iter().all(Option::is_none));
        assert_eq!(completeness(&m, 1.0).unwrap_err().kind(), "EmptyMap");
        assert_eq!(median_error(&m).unwrap_err().kind(), "EmptyMap");
    }

    #[test]
    fn frame_mismatch() {
        let a = grid(vec![Some(1.0); 4], 2);
        let mut b = a.clone();
        b.origin = (0.5, 0.0);
        assert_eq!(error_map(&a, &b).unwrap_err().kind(), "GridMismatch");
    }

    #[test]
    fn median_of_three() {
        let m = map_of(vec![Some(0.5), Some(-0.1), None, Some(0.3)]);
        assert_eq!(median_error(&m).unwrap(), 0.3);
    }

    #[test]
    fn lower_median_for_even_counts() {
        let m = map_of(vec![Some(4.0), Some(1.0), Some(-2.0), Some(3.0)]);
        assert_eq!(median_error(&m).unwrap(), 2.0);
    }

    #[test]
    fn half_missing_is_fifty_percent() {
        let truth = grid(vec![Some(5.0); 8], 4);
        let mut test = truth.clone();
        for k in 0..4 {
            test.heights[k] = None;
        }
        let m = error_map(&test, &truth).unwrap();
        assert_eq!(completeness(&m, 1.0).unwrap(), 50.0);
    }

    #[test]
    fn random_maps_match_oracles() {
        let mut r = rng(13);
        for _ in 0..10 {
            let n = 10_000;
            let tv: Vec<Option<f64>> = (0..n).map(|_| r.random_bool(0.9).then(|| r.random_range(-2.0..2.0))).collect();
            let gv: Vec<Option<f64>> = (0..n).map(|_| r.random_bool(0.95).then(|| r.random_range(-2.0..2.0))).collect();
            let m = error_map(&grid(tv.clone(), 100), &grid(gv.clone(), 100)).unwrap();
            for k in 0..n {
                let want = match (tv[k], gv[k]) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                };
                assert_eq!(m.errors[k], want);
            }
            let mut abs: Vec<f64> = m.errors.iter().flatten().map(|e| e.abs()).collect();
            abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = abs[(abs.len() - 1) / 2];
            assert!((median_error(&m).unwrap() - want).abs() <= 1e-12);
            let denom = gv.iter().filter(|g| g.is_some()).count() as f64;
            let good = abs.iter().filter(|&&e| e < 0.7).count() as f64;
            assert_eq!(completeness(&m, 0.7).unwrap(), 100.0 * good / denom);
        }
    }
}
