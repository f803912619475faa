use std::collections::HashMap;

use nalgebra::{Matrix3, Matrix6, Rotation3, SymmetricEigen, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EuclideanError;
use crate::geometry::{GeometryError, Point3, RANK_TOLERANCE};

/// Proper rigid motion `x -> r x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.r * p.to_vector() + self.t))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        Self { r: rt, t: -(rt * self.t) }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self {
            r: self.r * first.r,
            t: self.r * first.t + self.t,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Least-squares rigid motion taking the first point of each pair onto the
/// second (SVD of the cross-covariance, reflection-corrected).
pub fn fit_rigid(pairs: &[(Point3, Point3)]) -> Result<RigidTransform, GeometryError> {
    let n = pairs.len();
    if n < 3 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "rigid fit",
            ratio: 0.0,
        });
    }
    let inv = 1.0 / n as f64;
    let cs = pairs.iter().fold(Vector3::zeros(), |a, (s, _)| a + s.to_vector()) * inv;
    let ct = pairs.iter().fold(Vector3::zeros(), |a, (_, t)| a + t.to_vector()) * inv;
    let mut cov = Matrix3::zeros();
    for (s, t) in pairs {
        cov += (s.to_vector() - cs) * (t.to_vector() - ct).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let ratio = if sv[0] > 0.0 { sv[1] / sv[0] } else { 0.0 };
    if ratio < RANK_TOLERANCE {
        return Err(GeometryError::DegenerateConfiguration {
            context: "rigid fit",
            ratio,
        });
    }
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(RigidTransform { r, t: ct - r * cs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the correspondence RMS improves by less than this, metres.
    pub tolerance: f64,
    /// Metres.
    pub max_corr_dist: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            max_corr_dist: 5.0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.max_iterations < 1 {
            return Err(GeometryError::InvalidInput("ICP max_iterations must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) || !(self.max_corr_dist > 0.0 && self.max_corr_dist.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "ICP needs tolerance >= 0 and a finite max_corr_dist > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpReport {
    /// Maps source onto target.
    pub transform: RigidTransform,
    /// Updates evaluated.
    pub iterations: usize,
    /// Correspondence RMS at the identity, then each new lowest value;
    /// never increases.
    pub rms_history: Vec<f64>,
    pub pairs: usize,
}

/// Uniform grid over the target cloud for nearest-neighbour queries.
struct GridIndex<'a> {
    points: &'a [Point3],
    /// Mean horizontal sample spacing.
    spacing: f64,
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [Point3], max_dist: f64) -> Self {
        // Cell side from the horizontal sampling density, so that each cell
        // holds a handful of points whatever the search radius.
        let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(&p.to_vector());
            hi = hi.sup(&p.to_vector());
        }
        let ext = hi - lo;
        let area = (ext.x * ext.y).max(ext.x * ext.z).max(ext.y * ext.z).max(f64::MIN_POSITIVE);
        let spacing = (area / points.len() as f64).sqrt();
        let cell = (4.0 * spacing).min(max_dist).max(max_dist / 64.0);
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, spacing, cell, cells }
    }

    fn key(p: &Point3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices of every point within `radius` of `q`.
    fn within(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let (kx, ky, kz) = Self::key(q, self.cell);
        let reach = (radius / self.cell).ceil() as i64;
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(ids.iter().copied().filter(|&i| self.points[i].distance(q) <= radius));
                    }
                }
            }
        }
        out
    }

    /// Unit surface normal at every point from the principal axes of its
    /// neighbourhood; `None` where fewer than three neighbours are found or
    /// the neighbourhood is not locally planar-spread.
    fn normals(&self) -> Vec<Option<Vector3<f64>>> {
        let radius = NORMAL_RADIUS * self.spacing;
        self.points
            .par_iter()
            .map(|p| {
                let ids = self.within(p, radius);
                if ids.len() < 3 {
                    return None;
                }
                let inv = 1.0 / ids.len() as f64;
                let c = ids.iter().fold(Vector3::zeros(), |a, &i| a + self.points[i].to_vector()) * inv;
                let cov = ids.iter().fold(Matrix3::zeros(), |a, &i| {
                    let d = self.points[i].to_vector() - c;
                    a + d * d.transpose()
                });
                let eig = SymmetricEigen::new(cov);
                let mut order = [0, 1, 2];
                order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
                // The two spread directions must be well defined.
                if eig.eigenvalues[order[1]] <= RANK_TOLERANCE * eig.eigenvalues[order[2]] {
                    return None;
                }
                Some(eig.eigenvectors.column(order[0]).into_owned())
            })
            .collect()
    }

    /// Nearest point within `max_dist`; ties go to the smaller index.
    fn nearest(&self, q: &Point3, max_dist: f64) -> Option<(usize, f64)> {
        let (kx, ky, kz) = Self::key(q, self.cell);
        let reach = (max_dist / self.cell).ceil() as i64;
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=reach {
            // Anything in shell `ring` is at least `(ring - 1) * cell` away.
            if let Some((_, d)) = best {
                if ((ring - 1) as f64) * self.cell > d {
                    break;
                }
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(ids) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) else {
                            continue;
                        };
                        for &i in ids {
                            let d = self.points[i].distance(q);
                            if d > max_dist {
                                continue;
                            }
                            best = match best {
                                Some((j, bd)) if bd < d || (bd == d && j < i) => Some((j, bd)),
                                _ => Some((i, d)),
                            };
                        }
                    }
                }
            }
        }
        best
    }
}

/// Correspondences farther than this multiple of the median pair distance
/// are ignored, so that the part of a cloud outside the overlap does not
/// drag the fit towards the other cloud's border.
const TRIM_FACTOR: f64 = 3.0;

/// Neighbourhood radius for target normals, in sample spacings.
const NORMAL_RADIUS: f64 = 2.5;

/// `(source point, nearest target index)` for every transformed source
/// point with a target neighbour within `max_dist`, trimmed at
/// `TRIM_FACTOR` times the median distance, and the RMS of the kept
/// distances.
fn correspond(
    source: &[Point3],
    grid: &GridIndex,
    tf: &RigidTransform,
    max_dist: f64,
) -> (Vec<(Point3, usize)>, f64) {
    let found: Vec<Option<(Point3, usize, f64)>> = source
        .par_iter()
        .map(|s| grid.nearest(&tf.apply(s), max_dist).map(|(i, d)| (*s, i, d)))
        .collect();
    let mut pairs: Vec<(Point3, usize, f64)> = found.into_iter().flatten().collect();
    if pairs.is_empty() {
        return (Vec::new(), f64::INFINITY);
    }
    let mut d: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    d.sort_by(f64::total_cmp);
    let cutoff = TRIM_FACTOR * d[(d.len() - 1) / 2];
    pairs.retain(|p| p.2 <= cutoff);
    let rms = (pairs.iter().map(|p| p.2 * p.2).sum::<f64>() / pairs.len() as f64).sqrt();
    (pairs.into_iter().map(|(s, i, _)| (s, i)).collect(), rms)
}

/// One linearized point-to-plane update applied after `tf`. Falls back to a
/// point-to-point fit when the normals do not constrain all six degrees of
/// freedom.
fn plane_step(
    pairs: &[(Point3, usize)],
    grid: &GridIndex,
    normals: &[Option<Vector3<f64>>],
    tf: &RigidTransform,
) -> Option<RigidTransform> {
    let mut a = Matrix6::zeros();
    let mut b = Vector6::zeros();
    let mut used = 0;
    for (s, i) in pairs {
        let Some(n) = normals[*i] else { continue };
        let p = tf.apply(s).to_vector();
        let q = grid.points[*i].to_vector();
        let c = p.cross(&n);
        let j = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        let r = (p - q).dot(&n);
        a += j * j.transpose();
        b -= j * r;
        used += 1;
    }
    let step = (used >= 6).then(|| a.cholesky().map(|ch| ch.solve(&b))).flatten();
    match step {
        Some(x) => {
            let omega = Vector3::new(x[0], x[1], x[2]);
            let delta = RigidTransform {
                r: Rotation3::new(omega).into_inner(),
                t: Vector3::new(x[3], x[4], x[5]),
            };
            Some(delta.compose(tf))
        }
        None => {
            let pts: Vec<(Point3, Point3)> = pairs.iter().map(|(s, i)| (*s, grid.points[*i])).collect();
            fit_rigid(&pts).ok()
        }
    }
}

/// Point-to-plane ICP aligning `source` onto `target`, starting from the
/// identity, over trimmed nearest-neighbour correspondences and target
/// normals. Returns the transform with the lowest correspondence RMS seen;
/// `rms_history` lists each new lowest value.
pub fn icp_align(source: &[Point3], target: &[Point3], cfg: &IcpConfig) -> Result<IcpReport, EuclideanError> {
    cfg.validate()?;
    if source.len() < 3 || target.len() < 3 {
        return Err(EuclideanError::NoOverlap {
            pairs: source.len().min(target.len()),
        });
    }
    let grid = GridIndex::new(target, cfg.max_corr_dist);
    let normals = grid.normals();
    let mut tf = RigidTransform::identity();
    let (mut pairs, mut rms) = correspond(source, &grid, &tf, cfg.max_corr_dist);
    if pairs.len() < 3 {
        return Err(EuclideanError::NoOverlap { pairs: pairs.len() });
    }
    let mut history = vec![rms];
    let mut best = (rms, tf, pairs.len());
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        let Some(next) = plane_step(&pairs, &grid, &normals, &tf) else { break };
        let (next_pairs, next_rms) = correspond(source, &grid, &next, cfg.max_corr_dist);
        iterations = it;
        if next_pairs.len() < 3 {
            break;
        }
        let gain = rms - next_rms;
        tf = next;
        pairs = next_pairs;
        rms = next_rms;
        if rms < best.0 {
            best = (rms, tf, pairs.len());
            history.push(rms);
        }
        if rms == 0.0 || gain.abs() < cfg.tolerance {
            break;
        }
    }
    Ok(IcpReport {
        transform: best.1,
        iterations,
        rms_history: history,
        pairs: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::rng;
    use nalgebra::Rotation3;
    use rand::Rng;

    /// Rough terrain sampled on a 1 m grid.
    fn terrain(n: usize) -> Vec<Point3> {
        let mut r = rng(40);
        let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| (r.random_range(0.0..n as f64), r.random_range(0.0..n as f64), r.random_range(2.0..8.0), r.random_range(3.0..9.0)))
            .collect();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64, j as f64);
                let z: f64 = bumps
                    .iter()
                    .map(|(cx, cy, h, s)| h * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                    .sum::<f64>()
                    + 0.3 * (0.4 * x).sin() * (0.3 * y).cos();
                out.push(Point3::new(x, y, z));
            }
        }
        out
    }

    fn rotz(deg: f64, t: Vector3<f64>) -> RigidTransform {
        RigidTransform {
            r: *Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians()).matrix(),
            t,
        }
    }

    #[test]
    fn recovers_known_motion() {
        let target = terrain(40);
        let c = Vector3::new(20.0, 20.0, 0.0);
        // Rotate 5 degrees about the cloud centre, then shift by (1, 2, 0).
        let truth = rotz(5.0, Vector3::new(1.0, 2.0, 0.0) + c - rotz(5.0, Vector3::zeros()).r * c);
        let source: Vec<Point3> = target.iter().map(|p| truth.inverse().apply(p)).collect();
        let cfg = IcpConfig {
            max_corr_dist: 8.0,
            ..IcpConfig::default()
        };
        let rep = icp_align(&source, &target, &cfg).unwrap();
        let err = rep.transform.compose(&truth.inverse());
        assert!(err.angle() <= 1e-4, "angle {}", err.angle());
        assert!((rep.transform.t - truth.t).norm() <= 1e-3);
        assert!(rep.rms_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_clouds_one_iteration() {
        let cloud = terrain(15);
        let rep = icp_align(&cloud, &cloud, &IcpConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((rep.transform.r - Matrix3::identity()).norm() <= 1e-12);
        assert!(rep.transform.t.norm() <= 1e-12);
    }

    #[test]
    fn far_apart_clouds_do_not_overlap() {
        let a = terrain(10);
        let b: Vec<Point3> = a.iter().map(|p| Point3::new(p.x + 1000.0, p.y, p.z)).collect();
        let cfg = IcpConfig {
            max_corr_dist: 1.0,
            ..IcpConfig::default()
        };
        assert_eq!(icp_align(&a, &b, &cfg).unwrap_err().kind(), "NoOverlap");
    }

    #[test]
    fn rigid_fit_recovers_motion_and_stays_proper() {
        let mut r = rng(3);
        let src: Vec<Point3> = (0..30)
            .map(|_| Point3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)))
            .collect();
        let tf = rotz(37.0, Vector3::new(3.0, -1.0, 2.0));
        let pairs: Vec<(Point3, Point3)> = src.iter().map(|p| (*p, tf.apply(p))).collect();
        let fit = fit_rigid(&pairs).unwrap();
        assert!((fit.r - tf.r).norm() <= 1e-12);
        assert!((fit.r.determinant() - 1.0).abs() <= 1e-12);
        assert!((fit.r.transpose() * fit.r - Matrix3::identity()).norm() <= 1e-12);
        let line: Vec<(Point3, Point3)> = (0..5).map(|k| (Point3::new(k as f64, 0.0, 0.0), Point3::new(0.0, k as f64, 0.0))).collect();
        assert!(fit_rigid(&line).is_err());
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut r = rng(8);
        let pts: Vec<Point3> = (0..500)
            .map(|_| Point3::new(r.random_range(0.0..30.0), r.random_range(0.0..30.0), r.random_range(0.0..3.0)))
            .collect();
        let grid = GridIndex::new(&pts, 4.0);
        for _ in 0..200 {
            let q = Point3::new(r.random_range(-3.0..33.0), r.random_range(-3.0..33.0), r.random_range(-2.0..5.0));
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.distance(&q)))
                .filter(|(_, d)| *d <= 4.0)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(grid.nearest(&q, 4.0), brute);
        }
    }
}
