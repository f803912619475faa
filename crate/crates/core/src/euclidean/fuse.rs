use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::icp::{icp_align, IcpConfig, IcpReport, RigidTransform};
use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseOutcome {
    pub cloud: Vec<Point3>,
    /// Index of the reference (largest) input.
    pub reference: usize,
    /// Alignment of each input onto the reference; `None` for skipped
    /// inputs and the identity for the reference itself.
    pub transforms: Vec<Option<RigidTransform>>,
    pub reports: Vec<Option<IcpReport>>,
    pub warnings: Vec<String>,
}

fn voxel(p: &Point3, size: f64) -> (i64, i64, i64) {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Aligns every cloud onto the largest one (first on ties) and concatenates
/// them. The reference is kept whole; a point of a later cloud is kept only
/// if its `voxel_size` cube holds no point from an earlier cloud. Clouds
/// that do not overlap the reference are skipped with a warning.
pub fn fuse_groups(clouds: &[Vec<Point3>], cfg: &IcpConfig, voxel_size: f64) -> FuseOutcome {
    let mut out = FuseOutcome {
        cloud: Vec::new(),
        reference: 0,
        transforms: vec![None; clouds.len()],
        reports: vec![None; clouds.len()],
        warnings: Vec::new(),
    };
    if clouds.is_empty() {
        return out;
    }
    let reference = (0..clouds.len()).fold(0, |best, k| if clouds[k].len() > clouds[best].len() { k } else { best });
    out.reference = reference;
    out.transforms[reference] = Some(RigidTransform::identity());
    out.cloud = clouds[reference].clone();
    let mut occupied: HashSet<(i64, i64, i64)> = out.cloud.iter().map(|p| voxel(p, voxel_size)).collect();
    for (k, cloud) in clouds.iter().enumerate() {
        if k == reference {
            continue;
        }
        match icp_align(cloud, &clouds[reference], cfg) {
            Ok(rep) => {
                let moved: Vec<Point3> = cloud.iter().map(|p| rep.transform.apply(p)).collect();
                let mut added = HashSet::new();
                for p in moved {
                    let key = voxel(&p, voxel_size);
                    if !occupied.contains(&key) {
                        added.insert(key);
                        out.cloud.push(p);
                    }
                }
                occupied.extend(added);
                out.transforms[k] = Some(rep.transform);
                out.reports[k] = Some(rep);
            }
            Err(e) => {
                let msg = format!("cloud {k} skipped: {e}");
                log::warn!("{msg}");
                out.warnings.push(msg);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dx: f64) -> Vec<Point3> {
        (0..n * n)
            .map(|k| {
                let (x, y) = ((k % n) as f64 + dx, (k / n) as f64);
                Point3::new(x, y, (0.3 * x).sin() * 2.0 + (0.2 * y).cos())
            })
            .collect()
    }

    #[test]
    fn single_cloud_unchanged() {
        let c = grid(10, 0.0);
        let out = fuse_groups(std::slice::from_ref(&c), &IcpConfig::default(), 1.0);
        assert_eq!(out.cloud, c);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn disjoint_cloud_skipped_with_warning() {
        let a = grid(12, 0.0);
        let b = grid(8, 5000.0);
        let out = fuse_groups(&[b, a.clone()], &IcpConfig::default(), 1.0);
        assert_eq!(out.reference, 1);
        assert_eq!(out.cloud, a);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.transforms[0].is_none());
    }

    #[test]
    fn duplicates_thinned_and_new_area_kept() {
        let a = grid(10, 0.0);
        // Same surface, half of it overlapping and half extending it.
        let b: Vec<Point3> = grid(12, 0.0).into_iter().filter(|p| p.y >= 5.0).collect();
        let cfg = IcpConfig {
            max_corr_dist: 0.5,
            ..IcpConfig::default()
        };
        let out = fuse_groups(&[a.clone(), b.clone()], &cfg, 0.5);
        let t = out.transforms[1].unwrap();
        assert!(t.t.norm() <= 1e-9 && t.angle() <= 1e-9);
        assert_eq!(&out.cloud[..a.len()], &a[..]);
        let extra = b.iter().filter(|p| !(p.x < 10.0 && p.y < 10.0)).count();
        assert_eq!(out.cloud.len(), a.len() + extra);
    }
}
