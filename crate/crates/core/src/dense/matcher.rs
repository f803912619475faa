use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imaging::GrayImage;

/// Per-pixel horizontal disparity on a rectified pair: left pixel `(c, r)`
/// corresponds to right pixel `(c + d, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub disparity: Vec<f64>,
    pub valid: Vec<bool>,
    /// Inclusive integer search range the map was computed with.
    pub range: (i32, i32),
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize, range: (i32, i32)) -> Self {
        Self {
            width,
            height,
            disparity: vec![0.0; width * height],
            valid: vec![false; width * height],
            range,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let k = row * self.width + col;
        self.valid[k].then(|| self.disparity[k])
    }

    pub fn set(&mut self, col: usize, row: usize, d: f64) {
        let k = row * self.width + col;
        self.disparity[k] = d;
        self.valid[k] = true;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// A dense matcher on a rectified pair. Implementations receive images of
/// equal height whose invalid (outside the source tile) pixels are NaN.
pub trait StereoMatcher: Send + Sync {
    fn name(&self) -> &str;
    fn compute(&self, left: &GrayImage, right: &GrayImage, range: (i32, i32)) -> DisparityMap;
}

/// Winner-take-all zero-normalized cross-correlation block matcher with
/// parabolic sub-pixel refinement and a left-right consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZnccMatcher {
    /// Odd window side in pixels.
    pub window: usize,
    /// Best correlation must reach this value.
    pub min_score: f64,
    /// Windows whose intensity standard deviation is at or below this are
    /// treated as textureless.
    pub min_texture: f64,
    /// Maximum left-right disagreement in pixels.
    pub lr_tolerance: f64,
}

impl Default for ZnccMatcher {
    fn default() -> Self {
        Self {
            window: 9,
            min_score: 0.5,
            min_texture: 1.0,
            lr_tolerance: 1.0,
        }
    }
}

struct WindowStats {
    mean: Vec<f64>,
    std: Vec<f64>,
    ok: Vec<bool>,
    /// The image with NaN replaced by zero, in f64.
    filled: Vec<f64>,
}

fn window_stats(img: &GrayImage, half: usize) -> WindowStats {
    let (w, h) = (img.width(), img.height());
    let stride = w + 1;
    let mut s1 = vec![0.0f64; stride * (h + 1)];
    let mut s2 = vec![0.0f64; stride * (h + 1)];
    let mut bad = vec![0u32; stride * (h + 1)];
    let mut filled = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let v = img.get(c, r) as f64;
            let (v, b) = if v.is_finite() { (v, 0) } else { (0.0, 1) };
            filled[r * w + c] = v;
            let k = (r + 1) * stride + c + 1;
            s1[k] = v + s1[k - 1] + s1[k - stride] - s1[k - stride - 1];
            s2[k] = v * v + s2[k - 1] + s2[k - stride] - s2[k - stride - 1];
            bad[k] = b + bad[k - 1] + bad[k - stride] - bad[k - stride - 1];
        }
    }
    let n = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mut mean = vec![0.0; w * h];
    let mut std = vec![0.0; w * h];
    let mut ok = vec![false; w * h];
    for r in half..h.saturating_sub(half) {
        for c in half..w.saturating_sub(half) {
            let (r0, r1, c0, c1) = (r - half, r + half + 1, c - half, c + half + 1);
            let rect = |s: &[f64]| s[r1 * stride + c1] - s[r0 * stride + c1] - s[r1 * stride + c0] + s[r0 * stride + c0];
            let nb = bad[r1 * stride + c1] + bad[r0 * stride + c0] - bad[r0 * stride + c1] - bad[r1 * stride + c0];
            if nb != 0 {
                continue;
            }
            let m = rect(&s1) / n;
            let var = (rect(&s2) / n - m * m).max(0.0);
            mean[r * w + c] = m;
            std[r * w + c] = var.sqrt();
            ok[r * w + c] = true;
        }
    }
    WindowStats { mean, std, ok, filled }
}

impl ZnccMatcher {
    /// Winner-take-all sweep of `a` against `b` with `x_b = x_a + e` for
    /// `e` in `range`. Returns the refined offset per pixel of `a`.
    fn sweep(&self, a: &GrayImage, b: &GrayImage, range: (i32, i32)) -> Vec<Option<f64>> {
        let half = self.window / 2;
        let (wa, wb, h) = (a.width(), b.width(), a.height());
        let sa = window_stats(a, half);
        let sb = window_stats(b, half);
        let n = (self.window * self.window) as f64;
        let rows: Vec<Vec<Option<f64>>> = (0..h)
            .into_par_iter()
            .map(|r| {
                let mut out = vec![None; wa];
                if r < half || r + half >= h {
                    return out;
                }
                let mut best = vec![f64::NEG_INFINITY; wa];
                let mut best_e = vec![i32::MIN; wa];
                let mut minus = vec![f64::NAN; wa];
                let mut plus = vec![f64::NAN; wa];
                let mut prev = vec![f64::NAN; wa];
                let mut colsum = vec![0.0; wa];
                for e in range.0..=range.1 {
                    // Vertical sums of a(r', c) * b(r', c + e) over the window rows.
                    for c in 0..wa {
                        let cb = c as i64 + e as i64;
                        colsum[c] = if cb < 0 || cb >= wb as i64 {
                            0.0
                        } else {
                            let cb = cb as usize;
                            (r - half..=r + half)
                                .map(|rr| sa.filled[rr * wa + c] * sb.filled[rr * wb + cb])
                                .sum()
                        };
                    }
                    for c in 0..wa {
                        let ka = r * wa + c;
                        let cb = c as i64 + e as i64;
                        let score = if c < half
                            || c + half >= wa
                            || cb < half as i64
                            || cb + half as i64 >= wb as i64
                            || !sa.ok[ka]
                        {
                            f64::NAN
                        } else {
                            let kb = r * wb + cb as usize;
                            if !sb.ok[kb] || sa.std[ka] <= self.min_texture || sb.std[kb] <= self.min_texture {
                                f64::NAN
                            } else {
                                let s: f64 = colsum[c - half..=c + half].iter().sum();
                                (s / n - sa.mean[ka] * sb.mean[kb]) / (sa.std[ka] * sb.std[kb])
                            }
                        };
                        if score > best[c] {
                            best[c] = score;
                            best_e[c] = e;
                            minus[c] = prev[c];
                            plus[c] = f64::NAN;
                        } else if best_e[c] == e - 1 {
                            plus[c] = score;
                        }
                        prev[c] = score;
                    }
                }
                for c in 0..wa {
                    let e = best_e[c];
                    if !(best[c] >= self.min_score) || e <= range.0 || e >= range.1 {
                        continue;
                    }
                    let (m, p, s0) = (minus[c], plus[c], best[c]);
                    if !(m.is_finite() && p.is_finite()) {
                        continue;
                    }
                    let denom = m - 2.0 * s0 + p;
                    let delta = if denom < 0.0 {
                        (0.5 * (m - p) / denom).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    };
                    out[c] = Some(e as f64 + delta);
                }
                out
            })
            .collect();
        rows.into_iter().flatten().collect()
    }

    /// Left-to-right and right-to-left maps before the consistency check.
    /// The right map uses the same convention seen from the right image:
    /// right pixel `(c, r)` corresponds to left pixel `(c - d, r)`.
    pub fn compute_both(&self, left: &GrayImage, right: &GrayImage, range: (i32, i32)) -> (DisparityMap, DisparityMap) {
        let lr = self.sweep(left, right, range);
        let rl = self.sweep(right, left, (-range.1, -range.0));
        let mut lmap = DisparityMap::invalid(left.width(), left.height(), range);
        let mut rmap = DisparityMap::invalid(right.width(), right.height(), range);
        for (k, d) in lr.into_iter().enumerate() {
            if let Some(d) = d {
                lmap.set(k % left.width(), k / left.width(), d);
            }
        }
        for (k, e) in rl.into_iter().enumerate() {
            if let Some(e) = e {
                rmap.set(k % right.width(), k / right.width(), -e);
            }
        }
        (lmap, rmap)
    }
}

/// Whether left pixel `(col, row)` agrees with the right map within `tol`.
pub(crate) fn lr_consistent(lmap: &DisparityMap, rmap: &DisparityMap, col: usize, row: usize, tol: f64) -> bool {
    let Some(d) = lmap.get(col, row) else { return false };
    let cr = (col as f64 + d).round();
    if cr < 0.0 || cr >= rmap.width as f64 {
        return false;
    }
    rmap.get(cr as usize, row).is_some_and(|dr| (dr - d).abs() <= tol)
}

impl StereoMatcher for ZnccMatcher {
    fn name(&self) -> &str {
        "zncc"
    }

    fn compute(&self, left: &GrayImage, right: &GrayImage, range: (i32, i32)) -> DisparityMap {
        let (lmap, rmap) = self.compute_both(left, right, range);
        let mut out = DisparityMap::invalid(left.width(), left.height(), range);
        for row in 0..lmap.height {
            for col in 0..lmap.width {
                if lr_consistent(&lmap, &rmap, col, row, self.lr_tolerance) {
                    out.set(col, row, lmap.get(col, row).unwrap());
                }
            }
        }
        out
    }
}
