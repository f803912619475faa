use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::bundle::{bundle_adjust, BaConfig, BaReport, BaScope};
use super::select::{image_pair_counts, select_initial_image_pair, select_initial_tile_pair, InitSelection};
use super::{Reconstruction, SfmError};
use crate::features::{FeatureTrack, MatchTable};
use crate::geometry::{
    estimate_affine_fundamental_ransac, factorize_two_view, resect_camera_ransac,
    triangulate_multiview, AffineCamera, Correspondence2D2D, Correspondence2D3D, GeometryError,
    Point3, RansacConfig,
};
use crate::imaging::TileManifest;

/// A tile needs this many 2D-3D correspondences to be registered.
pub const MIN_REGISTRATION_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfmConfig {
    /// Image pairs with fewer summed matches are never used to initialize.
    pub min_pair_matches: usize,
    /// Run a global bundle adjustment after this many registrations.
    pub global_every: usize,
    pub ransac: RansacConfig,
    pub ba: BaConfig,
}

impl Default for SfmConfig {
    fn default() -> Self {
        Self {
            min_pair_matches: 64,
            global_every: 10,
            ransac: RansacConfig::default(),
            ba: BaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub tile_pair: (String, String),
    pub matches: usize,
    pub inliers: usize,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterReport {
    pub tile: String,
    pub correspondences: usize,
    pub inliers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangulationReport {
    pub added: usize,
    /// Tracks whose active observations all come from one source image.
    pub skipped_single_image: usize,
    pub skipped_degenerate: usize,
    /// Tracks that could not be brought under the reprojection threshold.
    pub skipped_reprojection: usize,
    /// Observations rejected while trimming tracks to the threshold.
    pub trimmed_observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tile: String,
    pub inliers: usize,
    pub rms: f64,
    pub points: usize,
    pub cameras: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Complete,
    /// Some tiles of the group could not be registered, or a step failed
    /// after initialization.
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfmOutcome {
    pub reconstruction: Reconstruction,
    pub selection: InitSelection,
    pub init: InitReport,
    pub status: RunStatus,
    pub unregistered: Vec<String>,
    pub log: Vec<IterationRecord>,
    pub ba_reports: Vec<BaReport>,
    pub warnings: Vec<String>,
}

/// Two-view initialization from the tracks seen in both tiles.
///
/// Mismatches are first removed with a robust affine fundamental fit; the
/// survivors are factorized. Points are scaled to unit RMS magnitude per
/// coordinate so that the reconstruction's numeric range does not depend on
/// the match count. Rejected correspondences are marked in both tiles.
pub fn initialize(
    recon: &mut Reconstruction,
    tile_i: &str,
    tile_j: &str,
    ransac: &RansacConfig,
) -> Result<InitReport, SfmError> {
    let mut tracks = Vec::new();
    let mut corrs = Vec::new();
    for (&track, obs) in &recon.observations {
        let find = |tile: &str| {
            obs.iter()
                .find(|(t, _)| t == tile)
                .filter(|_| !recon.rejected.contains(&(track, tile.to_string())))
                .map(|(_, p)| *p)
        };
        if let (Some(a), Some(b)) = (find(tile_i), find(tile_j)) {
            tracks.push(track);
            corrs.push(Correspondence2D2D::new(a, b));
        }
    }
    if corrs.len() < 4 {
        return Err(GeometryError::DegenerateConfiguration {
            context: "initialization",
            ratio: 0.0,
        }
        .into());
    }
    let filtered = estimate_affine_fundamental_ransac(&corrs, ransac)?;
    let keep: Vec<usize> = (0..corrs.len()).filter(|&k| filtered.inliers[k]).collect();
    let inlier_corrs: Vec<Correspondence2D2D> = keep.iter().map(|&k| corrs[k]).collect();
    let fact = factorize_two_view(&inlier_corrs)?;

    let s = (inlier_corrs.len() as f64).sqrt();
    let scale_cam = |c: &AffineCamera| AffineCamera { m: c.m / s, t: c.t };
    recon.cameras.insert(tile_i.to_string(), scale_cam(&fact.camera_i));
    recon.cameras.insert(tile_j.to_string(), scale_cam(&fact.camera_j));
    recon.registration_order = vec![tile_i.to_string(), tile_j.to_string()];
    for (&k, p) in keep.iter().zip(&fact.points) {
        recon.points.insert(tracks[k], Point3::new(p.x * s, p.y * s, p.z * s));
    }
    for (k, &track) in tracks.iter().enumerate() {
        if !filtered.inliers[k] {
            recon.rejected.insert((track, tile_i.to_string()));
            recon.rejected.insert((track, tile_j.to_string()));
        }
    }
    Ok(InitReport {
        tile_pair: (tile_i.to_string(), tile_j.to_string()),
        matches: corrs.len(),
        inliers: keep.len(),
        rms: recon.rms(),
    })
}

/// Number of 2D-3D correspondences each unregistered tile has with the
/// current reconstruction.
fn correspondence_counts(recon: &Reconstruction) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for &track in recon.points.keys() {
        for (tile, _) in &recon.observations[&track] {
            if recon.cameras.contains_key(tile) || recon.rejected.contains(&(track, tile.clone())) {
                continue;
            }
            *counts.entry(tile.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// The next tile to register.
///
/// Tiles of the two initial images come first, nearest (Chebyshev distance
/// on grid indices) to the initial tile of the same image. After those, the
/// tile with the most 2D-3D correspondences wins. Ties go to the smaller id.
/// Tiles in `failed` are skipped unless their correspondence count has grown
/// past the recorded one.
pub fn next_tile(
    recon: &Reconstruction,
    initial_tiles: &(String, String),
    failed: &BTreeMap<String, usize>,
) -> Result<String, SfmError> {
    let counts = correspondence_counts(recon);
    let candidates: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(tile, n)| {
            *n >= MIN_REGISTRATION_POINTS && failed.get(*tile).is_none_or(|&before| *n > before)
        })
        .collect();
    let anchors: Vec<(&str, (usize, usize))> = [&initial_tiles.0, &initial_tiles.1]
        .iter()
        .filter_map(|t| Some((recon.tile_images.get(*t)?.as_str(), *recon.tile_grid.get(*t)?)))
        .collect();
    let nearest = candidates
        .iter()
        .filter_map(|&(tile, _)| {
            let image = recon.tile_images.get(tile)?;
            let (gr, gc) = recon.tile_grid[tile];
            let (_, (ar, ac)) = anchors.iter().find(|(img, _)| img == image)?;
            Some((gr.abs_diff(*ar).max(gc.abs_diff(*ac)), tile))
        })
        .min();
    if let Some((_, tile)) = nearest {
        return Ok(tile.to_string());
    }
    candidates
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(t, _)| t.to_string())
        .ok_or(SfmError::NoRegistrableTile)
}

/// Resects `tile` from its 2D-3D correspondences and installs the camera;
/// RANSAC outliers are marked rejected.
pub fn register_tile(
    recon: &mut Reconstruction,
    tile: &str,
    ransac: &RansacConfig,
) -> Result<RegisterReport, SfmError> {
    let corrs = recon.correspondences_for(tile);
    if corrs.len() < MIN_REGISTRATION_POINTS {
        return Err(GeometryError::InsufficientInliers {
            found: corrs.len(),
            required: MIN_REGISTRATION_POINTS,
        }
        .into());
    }
    let data: Vec<Correspondence2D3D> =
        corrs.iter().map(|(_, px, pt)| Correspondence2D3D::new(*px, *pt)).collect();
    let outcome = resect_camera_ransac(&data, ransac)?;
    recon.cameras.insert(tile.to_string(), outcome.model);
    recon.registration_order.push(tile.to_string());
    for ((track, _, _), &inlier) in corrs.iter().zip(&outcome.inliers) {
        if !inlier {
            recon.rejected.insert((*track, tile.to_string()));
        }
    }
    Ok(RegisterReport {
        tile: tile.to_string(),
        correspondences: corrs.len(),
        inliers: outcome.inlier_count(),
    })
}

/// Triangulates every unreconstructed track that has active observations
/// in registered tiles of at least two distinct images.
///
/// A new point must reproject within `max_error` pixels in every view; the
/// worst observation is rejected repeatedly while two images remain, and a
/// track that still fails is left unreconstructed.
pub fn triangulate_new(recon: &mut Reconstruction, max_error: f64) -> TriangulationReport {
    let mut report = TriangulationReport::default();
    let pending: Vec<usize> = recon
        .observations
        .keys()
        .filter(|t| !recon.points.contains_key(t))
        .copied()
        .collect();
    for track in pending {
        let mut active: Vec<(String, crate::geometry::Point2)> = recon
            .active_observations(track)
            .into_iter()
            .map(|(t, p)| (t.to_string(), p))
            .collect();
        if active.len() < 2 {
            continue;
        }
        let images = |obs: &[(String, crate::geometry::Point2)]| -> usize {
            obs.iter().map(|(t, _)| &recon.tile_images[t]).collect::<BTreeSet<_>>().len()
        };
        if images(&active) < 2 {
            report.skipped_single_image += 1;
            continue;
        }
        loop {
            let cams: Vec<AffineCamera> = active.iter().map(|(t, _)| recon.cameras[t]).collect();
            let pixels: Vec<_> = active.iter().map(|(_, p)| *p).collect();
            let point = match triangulate_multiview(&cams, &pixels) {
                Ok(p) => p,
                Err(_) => {
                    report.skipped_degenerate += 1;
                    break;
                }
            };
            let (worst, err) = active
                .iter()
                .enumerate()
                .map(|(k, (t, p))| (k, recon.cameras[t].project(&point).distance(p)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if err <= max_error {
                recon.points.insert(track, point);
                report.added += 1;
                break;
            }
            let mut trimmed = active.clone();
            trimmed.remove(worst);
            if trimmed.len() < 2 || images(&trimmed) < 2 {
                report.skipped_reprojection += 1;
                break;
            }
            recon.rejected.insert((track, active[worst].0.clone()));
            report.trimmed_observations += 1;
            active = trimmed;
        }
    }
    report
}

fn unregistered(recon: &Reconstruction) -> Vec<String> {
    recon
        .tile_images
        .keys()
        .filter(|t| !recon.cameras.contains_key(*t))
        .cloned()
        .collect()
}

/// Full incremental reconstruction of one group.
///
/// Selects the initial pair, initializes, then repeats: choose the next
/// tile, register it, triangulate new tracks, refine the newest cameras. A
/// global refinement runs every `global_every` registrations and once at the
/// end. Failures after initialization end the loop early and are reported
/// through `status` and `warnings`.
pub fn run_incremental(
    group_id: &str,
    image_ids: &[String],
    manifest: &TileManifest,
    tables: &[MatchTable],
    tracks: &[FeatureTrack],
    cfg: &SfmConfig,
) -> Result<SfmOutcome, SfmError> {
    cfg.ransac.validate()?;
    cfg.ba.validate()?;
    let mut recon = Reconstruction::new(group_id, image_ids, manifest, tracks);
    let counts = image_pair_counts(tables, &recon.tile_images);
    let (image_pair, image_count) = select_initial_image_pair(&counts, cfg.min_pair_matches)?;
    let (tile_pair, tile_count) = select_initial_tile_pair(&image_pair, tables, &recon.tile_images)?;
    let selection = InitSelection {
        image_pair,
        tile_pair: tile_pair.clone(),
        image_pair_match_count: image_count,
        tile_pair_match_count: tile_count,
    };
    let init = initialize(&mut recon, &tile_pair.0, &tile_pair.1, &cfg.ransac)?;
    log::info!(
        "group {group_id}: initialized from {} / {} with {} of {} matches, rms {:.3e}",
        tile_pair.0,
        tile_pair.1,
        init.inliers,
        init.matches,
        init.rms
    );

    let mut ba_reports = Vec::new();
    let mut warnings = Vec::new();
    let mut log = Vec::new();
    let mut failed: BTreeMap<String, usize> = BTreeMap::new();
    let mut since_global = 0;
    let mut aborted = false;

    if recon.points.len() >= 4 {
        match bundle_adjust(&mut recon, &cfg.ba, BaScope::Global) {
            Ok(r) => ba_reports.push(r),
            Err(e) => {
                warnings.push(format!("initial bundle adjustment: {e}"));
                aborted = true;
            }
        }
    }

    let mut iteration = 0;
    while !aborted {
        let tile = match next_tile(&recon, &tile_pair, &failed) {
            Ok(t) => t,
            Err(SfmError::NoRegistrableTile) => break,
            Err(e) => return Err(e),
        };
        iteration += 1;
        let ransac = RansacConfig {
            seed: cfg.ransac.seed.wrapping_add(iteration as u64),
            ..cfg.ransac
        };
        let reg = match register_tile(&mut recon, &tile, &ransac) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("group {group_id}: tile {tile} not registered: {e}");
                let n = recon.correspondences_for(&tile).len();
                failed.insert(tile, n);
                continue;
            }
        };
        failed.remove(&tile);
        let tri = triangulate_new(&mut recon, cfg.ransac.inlier_threshold);
        since_global += 1;
        let scope = if since_global >= cfg.global_every.max(1) {
            since_global = 0;
            BaScope::Global
        } else {
            BaScope::Local
        };
        match bundle_adjust(&mut recon, &cfg.ba, scope) {
            Ok(r) => ba_reports.push(r),
            Err(e) => {
                warnings.push(format!("bundle adjustment after {tile}: {e}"));
                aborted = true;
            }
        }
        let record = IterationRecord {
            iteration,
            tile: tile.clone(),
            inliers: reg.inliers,
            rms: recon.rms(),
            points: recon.points.len(),
            cameras: recon.cameras.len(),
        };
        log::info!(
            "group {group_id}: registered {tile} ({} of {} inliers), +{} points, rms {:.3e}, {} points total",
            reg.inliers,
            reg.correspondences,
            tri.added,
            record.rms,
            record.points
        );
        log.push(record);
    }
    if !aborted && recon.points.len() >= 4 && recon.cameras.len() >= 2 {
        match bundle_adjust(&mut recon, &cfg.ba, BaScope::Global) {
            Ok(r) => ba_reports.push(r),
            Err(e) => {
                warnings.push(format!("final bundle adjustment: {e}"));
                aborted = true;
            }
        }
    }
    let missing = unregistered(&recon);
    for t in &missing {
        warnings.push(format!("tile {t} was not registered"));
    }
    let status = if aborted || !missing.is_empty() {
        RunStatus::Partial
    } else {
        RunStatus::Complete
    };
    if status == RunStatus::Partial {
        log::warn!("group {group_id}: partial reconstruction ({} warnings)", warnings.len());
    }
    Ok(SfmOutcome {
        reconstruction: recon,
        selection,
        init,
        status,
        unregistered: missing,
        log,
        ba_reports,
        warnings,
    })
}
