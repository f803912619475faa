use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EuclideanError, Gcp};
use crate::geometry::{
    apply_upgrade, fit_affine_upgrade, fit_affine_upgrade_ransac, triangulate_multiview, AffineCamera,
    AffineUpgrade, Point2, Point3, RansacConfig,
};
use crate::imaging::TileManifest;
use crate::sfm::Reconstruction;

/// Fewest control points that pin down the 12-parameter upgrade.
pub const MIN_GCPS: usize = 4;

/// Triangulates the affine position of `gcp` from its image observations.
///
/// Each observation is converted into every registered tile of its image
/// that contains it; overlapping tiles all contribute. At least two distinct
/// images must yield a usable observation.
pub fn locate_affine_gcp(
    recon: &Reconstruction,
    gcp: &Gcp,
    manifest: &TileManifest,
) -> Result<Point3, EuclideanError> {
    let mut cams: Vec<AffineCamera> = Vec::new();
    let mut pixels: Vec<Point2> = Vec::new();
    let mut images = BTreeSet::new();
    for (image, p) in &gcp.image_observations {
        for tile in manifest.tiles.iter().filter(|t| &t.image_id == image) {
            let Some(cam) = recon.cameras.get(&tile.tile_id) else {
                continue;
            };
            if !tile.contains_image_point(p.x, p.y) {
                continue;
            }
            let (x, y) = tile.image_to_tile(p.x, p.y);
            cams.push(*cam);
            pixels.push(Point2::new(x, y));
            images.insert(image.as_str());
        }
    }
    if images.len() < 2 {
        return Err(EuclideanError::GcpNotVisible {
            gcp_id: gcp.gcp_id.clone(),
            usable: images.len(),
        });
    }
    Ok(triangulate_multiview(&cams, &pixels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcpResidual {
    pub gcp_id: String,
    pub affine: Point3,
    /// `|H X_A - X_E|`, metres.
    pub residual: f64,
    pub inlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpgradeOutcome {
    pub upgrade: AffineUpgrade,
    pub cloud: Vec<Point3>,
    /// One entry per located GCP, in input order.
    pub residuals: Vec<GcpResidual>,
    /// GCPs that could not be located, with the error kind.
    pub skipped: Vec<(String, String)>,
}

impl UpgradeOutcome {
    pub fn inlier_rms(&self) -> f64 {
        let inl: Vec<f64> = self.residuals.iter().filter(|r| r.inlier).map(|r| r.residual).collect();
        if inl.is_empty() {
            return 0.0;
        }
        (inl.iter().map(|r| r * r).sum::<f64>() / inl.len() as f64).sqrt()
    }
}

/// Fits the affine-to-metric map from the located GCPs and applies it to
/// `cloud`. Exactly four GCPs are fitted directly; more go through RANSAC
/// with `cfg.inlier_threshold` in metres.
pub fn upgrade_group(
    recon: &Reconstruction,
    cloud: &[Point3],
    gcps: &[Gcp],
    manifest: &TileManifest,
    cfg: &RansacConfig,
) -> Result<UpgradeOutcome, EuclideanError> {
    let mut located: Vec<(&Gcp, Point3)> = Vec::new();
    let mut skipped = Vec::new();
    for g in gcps {
        match locate_affine_gcp(recon, g, manifest) {
            Ok(p) => located.push((g, p)),
            Err(e) => {
                log::warn!("GCP {} skipped: {e}", g.gcp_id);
                skipped.push((g.gcp_id.clone(), e.kind().to_string()));
            }
        }
    }
    if located.len() < MIN_GCPS {
        return Err(EuclideanError::InsufficientGcps {
            found: located.len(),
            required: MIN_GCPS,
        });
    }
    let pairs: Vec<(Point3, Point3)> = located.iter().map(|(g, a)| (*a, g.euclidean)).collect();
    let (upgrade, inliers) = if pairs.len() == MIN_GCPS {
        (fit_affine_upgrade(&pairs)?, vec![true; MIN_GCPS])
    } else {
        let out = fit_affine_upgrade_ransac(&pairs, cfg)?;
        (out.model, out.inliers)
    };
    let residuals = located
        .iter()
        .zip(&inliers)
        .map(|((g, a), &inlier)| GcpResidual {
            gcp_id: g.gcp_id.clone(),
            affine: *a,
            residual: upgrade.apply(a).distance(&g.euclidean),
            inlier,
        })
        .collect();
    Ok(UpgradeOutcome {
        upgrade,
        cloud: apply_upgrade(&upgrade, cloud),
        residuals,
        skipped,
    })
}
