use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tracks::DenseTrack;
use crate::geometry::{triangulate_multiview, AffineCamera, Point2, Point3};
use crate::sfm::{bundle_adjust, BaConfig, BaReport, BaScope, Reconstruction, SfmError};

/// Lower bound (pixels) on the robust-RMS rejection threshold, so that a
/// noiseless cloud whose median residual is at rounding level does not
/// lose points to rounding noise.
pub const DENSIFY_RMS_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensePoint {
    pub track_id: usize,
    pub point: Point3,
    /// Robust RMS reprojection error after refinement, pixels.
    pub rms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensifyReport {
    pub tracks: usize,
    pub triangulated: usize,
    /// Tracks with fewer than two observations in registered tiles.
    pub skipped_unregistered: usize,
    pub skipped_degenerate: usize,
    pub dropped_outliers: usize,
    pub median_rms: f64,
    pub threshold: f64,
    pub refinement: Option<BaReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DenseCloud {
    /// Sorted by track id.
    pub points: Vec<DensePoint>,
    pub report: DensifyReport,
}

impl DenseCloud {
    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(|p| p.point).collect()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Triangulates dense tracks with the (frozen) sparse cameras of `recon`,
/// refines the points against the robust loss of `cfg`, and drops points
/// whose robust RMS exceeds three times the median (but never below
/// [`DENSIFY_RMS_FLOOR`]).
pub fn densify(recon: &Reconstruction, tracks: &[DenseTrack], cfg: &BaConfig) -> Result<DenseCloud, SfmError> {
    cfg.validate()?;
    let mut report = DensifyReport {
        tracks: tracks.len(),
        ..DensifyReport::default()
    };
    let mut work = Reconstruction {
        group_id: recon.group_id.clone(),
        cameras: recon.cameras.clone(),
        points: BTreeMap::new(),
        observations: BTreeMap::new(),
        rejected: BTreeSet::new(),
        tile_images: recon.tile_images.clone(),
        tile_grid: recon.tile_grid.clone(),
        registration_order: recon.registration_order.clone(),
    };
    for t in tracks {
        let obs: Vec<(String, Point2)> =
            t.observations.iter().filter(|(tile, _)| recon.cameras.contains_key(tile)).cloned().collect();
        if obs.len() < 2 {
            report.skipped_unregistered += 1;
            continue;
        }
        let cams: Vec<AffineCamera> = obs.iter().map(|(tile, _)| recon.cameras[tile]).collect();
        let pixels: Vec<Point2> = obs.iter().map(|(_, p)| *p).collect();
        match triangulate_multiview(&cams, &pixels) {
            Ok(p) => {
                work.points.insert(t.track_id, p);
                work.observations.insert(t.track_id, obs);
                report.triangulated += 1;
            }
            Err(_) => report.skipped_degenerate += 1,
        }
    }
    if work.points.is_empty() {
        return Ok(DenseCloud {
            points: Vec::new(),
            report,
        });
    }
    let refine_cfg = BaConfig {
        outlier_threshold: None,
        ..*cfg
    };
    report.refinement = Some(bundle_adjust(&mut work, &refine_cfg, BaScope::PointsOnly)?);

    let robust_rms = |track: usize, p: &Point3| {
        let obs = &work.observations[&track];
        let rho: f64 = obs
            .iter()
            .map(|(tile, q)| cfg.loss.eval(work.cameras[tile].project(p).distance(q), cfg.scale).0)
            .sum();
        (2.0 * rho / obs.len() as f64).sqrt()
    };
    let scored: Vec<DensePoint> = work
        .points
        .iter()
        .map(|(&track_id, &point)| DensePoint {
            track_id,
            point,
            rms: robust_rms(track_id, &point),
        })
        .collect();
    let mut all: Vec<f64> = scored.iter().map(|p| p.rms).collect();
    report.median_rms = median(&mut all);
    report.threshold = (3.0 * report.median_rms).max(DENSIFY_RMS_FLOOR);
    let points: Vec<DensePoint> = scored.into_iter().filter(|p| p.rms <= report.threshold).collect();
    report.dropped_outliers = report.triangulated - points.len();
    Ok(DenseCloud { points, report })
}
