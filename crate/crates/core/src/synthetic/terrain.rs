use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SyntheticError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Metres along x and y, starting at the origin.
    pub extent: (f64, f64),
    /// Number of sinusoidal terrain components.
    pub harmonics: usize,
    /// Bound on the terrain's absolute height, metres.
    pub amplitude: f64,
    pub buildings: usize,
    /// Roof height above the ground at the footprint centre, metres.
    pub building_height: (f64, f64),
    /// Drives terrain, building layout and texture.
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::ConfigError(m.into()));
        if !(self.extent.0 > 0.0 && self.extent.1 > 0.0) {
            return bad("extent must be positive");
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad("amplitude must be finite and >= 0");
        }
        let (lo, hi) = self.building_height;
        if self.buildings > 0 && !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("building heights must satisfy 0 < low <= high");
        }
        if self.buildings > 0 && self.extent.0.min(self.extent.1) < 12.0 {
            return bad("extent too small for buildings");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub roof: f64,
}

impl Building {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wave {
    amp: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

/// Heightfield surface: smooth terrain plus flat-roofed boxes, with a
/// procedural albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub spec: SceneSpec,
    pub buildings: Vec<Building>,
    waves: Vec<Wave>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(i: i64, j: i64, seed: u64) -> f64 {
    let h = mix(seed ^ mix((i as u64).wrapping_mul(0x1000_0000_01b3) ^ mix(j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise in `[0, 1]` with feature size
/// `spacing`.
fn value_noise(x: f64, y: f64, spacing: f64, seed: u64) -> f64 {
    let (u, v) = (x / spacing, y / spacing);
    let (i, j) = (u.floor(), v.floor());
    let (fx, fy) = (u - i, v - j);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (i, j) = (i as i64, j as i64);
    let top = lattice(i, j, seed) * (1.0 - sx) + lattice(i + 1, j, seed) * sx;
    let bottom = lattice(i, j + 1, seed) * (1.0 - sx) + lattice(i + 1, j + 1, seed) * sx;
    top * (1.0 - sy) + bottom * sy
}

impl Terrain {
    pub fn new(spec: &SceneSpec) -> Result<Self, SyntheticError> {
        spec.validate()?;
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
        let span = spec.extent.0.max(spec.extent.1);
        let n = spec.harmonics.max(1) as f64;
        let waves: Vec<Wave> = (0..spec.harmonics)
            .map(|_| {
                let len = r.random_range(span / 3.0..span * 1.2);
                let dir = r.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / len;
                Wave {
                    amp: spec.amplitude / n * r.random_range(0.5..1.0),
                    kx: k * dir.cos(),
                    ky: k * dir.sin(),
                    phase: r.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        let mut terrain = Self {
            spec: spec.clone(),
            buildings: Vec::new(),
            waves,
        };
        for _ in 0..spec.buildings {
            let (w, h) = (r.random_range(4.0..10.0), r.random_range(4.0..10.0));
            let x0 = r.random_range(1.0..spec.extent.0 - w - 1.0);
            let y0 = r.random_range(1.0..spec.extent.1 - h - 1.0);
            let base = terrain.ground(x0 + w / 2.0, y0 + h / 2.0);
            let roof = base + r.random_range(spec.building_height.0..=spec.building_height.1);
            terrain.buildings.push(Building {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
                roof,
            });
        }
        Ok(terrain)
    }

    pub fn ground(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).sin()).sum()
    }

    fn ground_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        self.waves.iter().fold((0.0, 0.0), |(gx, gy), w| {
            let c = w.amp * (w.kx * x + w.ky * y + w.phase).cos();
            (gx + c * w.kx, gy + c * w.ky)
        })
    }

    /// Surface height: the highest of the ground and any roof above `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let mut z = self.ground(x, y);
        for b in &self.buildings {
            if b.contains(x, y) && b.roof > z {
                z = b.roof;
            }
        }
        z
    }

    /// Bounds on the surface height.
    pub fn z_bounds(&self) -> (f64, f64) {
        let a: f64 = self.waves.iter().map(|w| w.amp).sum();
        let roof = self.buildings.iter().map(|b| b.roof).fold(a, f64::max);
        (-a, roof)
    }

    /// 8-bit intensity of the surface at `(x, y)`: lattice-noise albedo
    /// under a fixed sun. `on_wall` marks vertical faces.
    pub fn intensity(&self, x: f64, y: f64, on_wall: bool) -> f64 {
        let seed = self.spec.seed ^ 0x7e57;
        let albedo = 0.6 * value_noise(x, y, 0.9, seed) + 0.4 * value_noise(x, y, 3.7, seed.rotate_left(17));
        let shade = if on_wall {
            0.45
        } else {
            let roofed = self.buildings.iter().any(|b| b.contains(x, y) && b.roof >= self.ground(x, y));
            let (gx, gy) = if roofed { (0.0, 0.0) } else { self.ground_gradient(x, y) };
            let normal = Vector3::new(-gx, -gy, 1.0).normalize();
            let sun = Vector3::new(-0.4, -0.3, 0.87).normalize();
            0.3 + 0.7 * normal.dot(&sun).max(0.0)
        };
        255.0 * (0.1 + 0.85 * albedo * shade)
    }

    /// First crossing of the ray `origin + s * dir` (s > 0) with the surface,
    /// found by marching in 5 cm steps and bisecting. `None` if the ray does
    /// not head down or misses.
    pub fn intersect(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<Vector3<f64>> {
        let d = dir.normalize();
        if d.z >= 0.0 {
            return None;
        }
        let (zmin, zmax) = self.z_bounds();
        let above = |s: f64| {
            let p = origin + d * s;
            p.z - self.height(p.x, p.y)
        };
        let mut s = ((origin.z - zmax - 0.01) / -d.z).max(0.0);
        let end = (origin.z - zmin + 0.01) / -d.z;
        if above(s) <= 0.0 {
            return None;
        }
        let step = 0.05;
        while s < end {
            let next = s + step;
            if above(next) <= 0.0 {
                let (mut lo, mut hi) = (s, next);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if above(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(origin + d * hi);
            }
            s = next;
        }
        None
    }
}
