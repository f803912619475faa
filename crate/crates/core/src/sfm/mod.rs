//! Incremental affine structure-from-motion over tiles.
//!
//! A reconstruction starts from one tile pair by factorization, then grows
//! one tile at a time: resect the tile's camera from already reconstructed
//! tracks, triangulate newly visible tracks, and refine with a robust
//! bundle adjustment.

mod bundle;
mod checkpoint;
mod incremental;
mod select;

pub use bundle::{bundle_adjust, BaConfig, BaReport, BaScope, LossKind};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_SCHEMA};
pub use incremental::{
    initialize, next_tile, register_tile, run_incremental, triangulate_new, InitReport,
    IterationRecord, RegisterReport, RunStatus, SfmConfig, SfmOutcome, TriangulationReport,
};
pub use select::{image_pair_counts, select_initial_image_pair, select_initial_tile_pair, InitSelection};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::features::FeatureTrack;
use crate::geometry::{AffineCamera, GeometryError, Point2, Point3};
use crate::imaging::TileManifest;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfmError {
    #[error("no viable initial pair: {0}")]
    NoViablePair(String),
    #[error("no unregistered tile observes at least 4 reconstructed points")]
    NoRegistrableTile,
    #[error("bundle adjustment diverged: {0}")]
    SolverDivergence(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl SfmError {
    pub fn kind(&self) -> &'static str {
        match self {
            SfmError::NoViablePair(_) => "NoViablePair",
            SfmError::NoRegistrableTile => "NoRegistrableTile",
            SfmError::SolverDivergence(_) => "SolverDivergence",
            SfmError::Geometry(g) => g.kind(),
            SfmError::Checkpoint(_) => "CheckpointError",
        }
    }
}

/// Evolving state of one group's reconstruction.
///
/// `observations` holds every observation of every track, including tiles
/// that are not registered yet; `rejected` lists `(track, tile)` pairs
/// classified as outliers, which are ignored from then on.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub group_id: String,
    pub cameras: BTreeMap<String, AffineCamera>,
    pub points: BTreeMap<usize, Point3>,
    pub observations: BTreeMap<usize, Vec<(String, Point2)>>,
    pub rejected: BTreeSet<(usize, String)>,
    /// Tile id -> source image id, for every tile of the group.
    pub tile_images: BTreeMap<String, String>,
    /// Tile id -> (grid row, grid col).
    pub tile_grid: BTreeMap<String, (usize, usize)>,
    pub registration_order: Vec<String>,
}

impl Reconstruction {
    /// Empty reconstruction over the tiles of `image_ids`. Track observations
    /// outside the group are discarded, as are tracks left with fewer than
    /// two observations.
    pub fn new(
        group_id: &str,
        image_ids: &[String],
        manifest: &TileManifest,
        tracks: &[FeatureTrack],
    ) -> Self {
        let images: BTreeSet<&str> = image_ids.iter().map(String::as_str).collect();
        let mut tile_images = BTreeMap::new();
        let mut tile_grid = BTreeMap::new();
        for t in &manifest.tiles {
            if images.contains(t.image_id.as_str()) {
                tile_images.insert(t.tile_id.clone(), t.image_id.clone());
                tile_grid.insert(t.tile_id.clone(), (t.grid_row, t.grid_col));
            }
        }
        let mut observations = BTreeMap::new();
        for tr in tracks {
            let obs: Vec<(String, Point2)> = tr
                .observations
                .iter()
                .filter(|(tile, _)| tile_images.contains_key(tile))
                .cloned()
                .collect();
            if obs.len() >= 2 {
                observations.insert(tr.track_id, obs);
            }
        }
        Self {
            group_id: group_id.to_string(),
            cameras: BTreeMap::new(),
            points: BTreeMap::new(),
            observations,
            rejected: BTreeSet::new(),
            tile_images,
            tile_grid,
            registration_order: Vec::new(),
        }
    }

    pub fn is_active(&self, track: usize, tile: &str) -> bool {
        self.cameras.contains_key(tile) && !self.rejected.contains(&(track, tile.to_string()))
    }

    /// Observations of `track` in registered tiles that are not rejected.
    pub fn active_observations(&self, track: usize) -> Vec<(&str, Point2)> {
        self.observations
            .get(&track)
            .map(|obs| {
                obs.iter()
                    .filter(|(tile, _)| self.is_active(track, tile))
                    .map(|(tile, p)| (tile.as_str(), *p))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Reprojection error of every active observation of a reconstructed
    /// point, as `(track, tile, error)`.
    pub fn residuals(&self) -> Vec<(usize, String, f64)> {
        let mut out = Vec::new();
        for (&track, point) in &self.points {
            for (tile, p) in self.active_observations(track) {
                let e = self.cameras[tile].project(point).distance(&p);
                out.push((track, tile.to_string(), e));
            }
        }
        out
    }

    /// Root-mean-square reprojection error over active observations.
    pub fn rms(&self) -> f64 {
        let r = self.residuals();
        if r.is_empty() {
            return 0.0;
        }
        (r.iter().map(|(_, _, e)| e * e).sum::<f64>() / r.len() as f64).sqrt()
    }

    /// 2D-3D correspondences available to a tile, with their track ids.
    pub fn correspondences_for(&self, tile: &str) -> Vec<(usize, Point2, Point3)> {
        let mut out = Vec::new();
        for (&track, point) in &self.points {
            if self.rejected.contains(&(track, tile.to_string())) {
                continue;
            }
            if let Some(obs) = self.observations.get(&track) {
                if let Some((_, p)) = obs.iter().find(|(t, _)| t == tile) {
                    out.push((track, *p, *point));
                }
            }
        }
        out
    }
}
