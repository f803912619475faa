use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::imaging::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Point2,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub max_keypoints: usize,
    pub harris_k: f64,
    /// Gaussian window of the structure tensor, pixels.
    pub sigma: f64,
    /// Keep responses above this fraction of the strongest one.
    pub relative_threshold: f64,
    pub nms_radius: usize,
    /// Side of the square descriptor patch.
    pub patch: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 1000,
            harris_k: 0.04,
            sigma: 1.5,
            relative_threshold: 0.01,
            nms_radius: 2,
            patch: 16,
        }
    }
}

// Responses at or below this are treated as flat regardless of the
// relative threshold.
const ABSOLUTE_FLOOR: f64 = 1e-3;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn blur(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * data[y * w + clamp(x as i64 + k as i64 - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clamp(y as i64 + k as i64 - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Harris corner response `det(T) - k tr(T)^2` of the Gaussian-smoothed
/// structure tensor `T`, row-major.
pub fn harris_response(img: &GrayImage, cfg: &DetectorConfig) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let at = |x: i64, y: i64| -> f64 {
        img.get(x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize) as f64
    };
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1))
                / 8.0;
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1))
                / 8.0;
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let kernel = gaussian_kernel(cfg.sigma);
    let sxx = blur(&ixx, w, h, &kernel);
    let syy = blur(&iyy, w, h, &kernel);
    let sxy = blur(&ixy, w, h, &kernel);
    (0..w * h)
        .map(|i| {
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            det - cfg.harris_k * tr * tr
        })
        .collect()
}

fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-12 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Mean/variance-normalized `patch x patch` samples centered on `p`.
fn describe(img: &GrayImage, p: &Point2, patch: usize) -> Option<Vec<f32>> {
    let half = patch as f64 / 2.0 - 0.5;
    let mut v = Vec::with_capacity(patch * patch);
    for r in 0..patch {
        for c in 0..patch {
            v.push(img.sample(p.x - half + c as f64, p.y - half + r as f64)?);
        }
    }
    let n = v.len() as f32;
    let mean = v.iter().sum::<f32>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f32>() / n;
    if var < 1e-6 {
        return None;
    }
    let inv = 1.0 / var.sqrt();
    Some(v.into_iter().map(|x| (x - mean) * inv).collect())
}

/// Harris corners with sub-pixel refinement and normalized patch
/// descriptors, strongest first.
pub fn detect_and_describe(img: &GrayImage, cfg: &DetectorConfig) -> Vec<Feature> {
    let (w, h) = (img.width(), img.height());
    let border = cfg.patch / 2 + 1;
    if w <= 2 * border || h <= 2 * border {
        return Vec::new();
    }
    let resp = harris_response(img, cfg);
    let max = resp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = (cfg.relative_threshold * max).max(ABSOLUTE_FLOOR);
    let rad = cfg.nms_radius as i64;

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let i = y * w + x;
            let v = resp[i];
            if v <= threshold {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -rad..=rad {
                for dx in -rad..=rad {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let j = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    // Plateaus keep their first pixel in row-major order.
                    if resp[j] > v || (resp[j] == v && j < i) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                candidates.push((v, y, x));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut out = Vec::new();
    for (v, y, x) in candidates {
        if out.len() >= cfg.max_keypoints {
            break;
        }
        let i = y * w + x;
        let ox = parabolic_offset(resp[i - 1], v, resp[i + 1]);
        let oy = parabolic_offset(resp[i - w], v, resp[i + w]);
        let position = Point2::new(x as f64 + ox, y as f64 + oy);
        if let Some(descriptor) = describe(img, &position, cfg.patch) {
            out.push(Feature {
                keypoint: Keypoint { position, response: v },
                descriptor,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_tile_has_no_keypoints() {
        let img = GrayImage::filled(64, 64, 120.0);
        assert!(detect_and_describe(&img, &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn isolated_bright_pixel() {
        let mut img = GrayImage::filled(48, 48, 0.0);
        img.set(23, 25, 255.0);
        let f = detect_and_describe(&img, &DetectorConfig::default());
        assert!(!f.is_empty());
        assert!(f.iter().any(|k| k.keypoint.position.distance(&Point2::new(23.0, 25.0)) <= 1.0));
    }

    // Independent oracle: direct 2D Gaussian window sums and an exhaustive
    // strict-maximum scan.
    #[test]
    fn checkerboard_count_matches_oracle() {
        let cell = 8;
        let img = GrayImage::from_fn(96, 96, |c, r| {
            if (c / cell + r / cell) % 2 == 0 { 200.0 } else { 40.0 }
        });
        let cfg = DetectorConfig::default();
        let got = detect_and_describe(&img, &cfg).len();

        let (w, h) = (96i64, 96i64);
        let px = |x: i64, y: i64| img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize) as f64;
        let grad = |x: i64, y: i64| {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)
                - px(x - 1, y - 1) - 2.0 * px(x - 1, y) - px(x - 1, y + 1)) / 8.0;
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)
                - px(x - 1, y - 1) - 2.0 * px(x, y - 1) - px(x + 1, y - 1)) / 8.0;
            (gx, gy)
        };
        let rad = (3.0 * cfg.sigma).ceil() as i64;
        let mut norm = 0.0;
        for dy in -rad..=rad {
            for dx in -rad..=rad {
                norm += (-((dx * dx + dy * dy) as f64) / (2.0 * cfg.sigma * cfg.sigma)).exp();
            }
        }
        let mut resp = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                for dy in -rad..=rad {
                    for dx in -rad..=rad {
                        let g = (-((dx * dx + dy * dy) as f64) / (2.0 * cfg.sigma * cfg.sigma)).exp() / norm;
                        let (gx, gy) = grad((x + dx).clamp(0, w - 1), (y + dy).clamp(0, h - 1));
                        a += g * gx * gx;
                        b += g * gy * gy;
                        c += g * gx * gy;
                    }
                }
                resp[(y * w + x) as usize] = a * b - c * c - cfg.harris_k * (a + b) * (a + b);
            }
        }
        let max = resp.iter().cloned().fold(f64::MIN, f64::max);
        let thr = cfg.relative_threshold * max;
        let border = (cfg.patch / 2 + 1) as i64;
        let mut expected = 0;
        for y in border..h - border {
            for x in border..w - border {
                let v = resp[(y * w + x) as usize];
                if v <= thr {
                    continue;
                }
                let mut best = true;
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let j = (y + dy) * w + x + dx;
                        let rj = resp[j as usize];
                        if (dx, dy) != (0, 0) && (rj > v || (rj == v && j < y * w + x)) {
                            best = false;
                        }
                    }
                }
                expected += best as usize;
            }
        }
        assert!(expected > 0);
        let diff = (got as f64 - expected as f64).abs();
        assert!(diff <= 0.1 * expected as f64, "got {got}, oracle {expected}");
    }

    #[test]
    fn deterministic() {
        let img = GrayImage::from_fn(80, 80, |c, r| (((c * 37 + r * 91) % 101) as f32) * 2.0);
        let cfg = DetectorConfig::default();
        assert_eq!(detect_and_describe(&img, &cfg), detect_and_describe(&img, &cfg));
    }
}
