use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{project_pushbroom, PushbroomCamera, SceneSpec, SyntheticError, Terrain};
use crate::euclidean::{save_gcps, Gcp};
use crate::evaluation::{write_asc, DemGrid};
use crate::features::{save_matches, MatchTable};
use crate::geometry::{Correspondence2D2D, Point2, Point3};
use crate::imaging::{tile_positions, write_meta, write_pgm8, GrayImage, ImageMeta, TileInfo, TileManifest};

pub const DATASET_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub id: String,
    pub camera: PushbroomCamera,
    pub capture_time: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Tile side used to cut the emitted match tables; a multiple of 3.
    pub tile_size: usize,
    /// Gaussian noise on every emitted correspondence, pixels.
    pub sigma: f64,
    /// Fraction of each sparse match table replaced by uniform positions.
    pub outlier_fraction: f64,
    pub sparse_points: usize,
    pub gcp_count: usize,
    /// Truth DEM cell size; dense samples sit at the cell centres.
    pub dem_cell: f64,
    pub seed: u64,
}

impl SynthOptions {
    fn validate(&self, images: &[ImageSpec]) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::ConfigError(m));
        if self.tile_size < 3 || !self.tile_size.is_multiple_of(3) {
            return bad(format!("tile size {} must be a positive multiple of 3", self.tile_size));
        }
        if let Some(img) = images.iter().find(|i| i.camera.rows < self.tile_size || i.camera.cols < self.tile_size) {
            return bad(format!("image {} is smaller than the tile size", img.id));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1)".into());
        }
        if !(self.dem_cell > 0.0) {
            return bad("DEM cell must be positive".into());
        }
        if self.gcp_count < 4 {
            return bad("at least 4 GCPs are needed".into());
        }
        if images.len() < 2 {
            return bad("at least two images are needed".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub terrain: Terrain,
    /// Surface samples at the truth DEM cell centres, row-major.
    pub dense_points: Vec<Point3>,
    pub sparse_points: Vec<Point3>,
    /// Image id -> exact full-image projection of each dense point, `None`
    /// where it is hidden or outside the image.
    pub dense_projections: BTreeMap<String, Vec<Option<Point2>>>,
    pub gcps: Vec<Gcp>,
    pub dem: DemGrid,
    pub planted_outliers: usize,
    pub sparse_matches: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SceneSpec,
    pub options: SynthOptions,
    pub images: Vec<ImageSpec>,
    pub rendered: Vec<GrayImage>,
    pub tiles: TileManifest,
    pub sparse: Vec<MatchTable>,
    pub dense: Vec<MatchTable>,
    pub truth: GroundTruth,
}

/// Scene used by the end-to-end checks: 60 m square of smooth terrain.
pub fn acceptance_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        extent: (60.0, 60.0),
        harmonics: 5,
        amplitude: 6.0,
        buildings: 0,
        building_height: (4.0, 10.0),
        seed,
    }
}

pub fn acceptance_options(seed: u64) -> SynthOptions {
    SynthOptions {
        tile_size: 120,
        sigma: 0.0,
        outlier_fraction: 0.0,
        sparse_points: 600,
        gcp_count: 4,
        dem_cell: 1.0,
        seed,
    }
}

/// Along-track stereo pairs over the scene centre: `groups` pairs of
/// images looking 15 degrees forward and backward, with small random
/// heading and roll. Pairs are captured a day apart, groups 60 days apart.
pub fn stereo_cameras(spec: &SceneSpec, groups: usize, gsd: f64, perspective: bool, seed: u64) -> Vec<ImageSpec> {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xca3e);
    let margin = 5.0;
    let side = ((spec.extent.0.max(spec.extent.1) + 2.0 * margin) / gsd).ceil() as usize;
    let center = Point3::new(spec.extent.0 / 2.0, spec.extent.1 / 2.0, 0.0);
    let t0 = Utc.with_ymd_and_hms(2021, 3, 1, 10, 30, 0).single().expect("valid date");
    let mut out = Vec::new();
    for g in 0..groups {
        for (k, tilt) in [0.26, -0.26].into_iter().enumerate() {
            let heading = r.random_range(-0.05..0.05);
            let roll = r.random_range(-0.05..0.05);
            out.push(ImageSpec {
                id: format!("im{}", 2 * g + k),
                camera: PushbroomCamera::over(center, heading, 400.0, tilt, roll, gsd, side, side, perspective),
                capture_time: t0 + Duration::days(60 * g as i64 + k as i64),
            });
        }
    }
    out
}

fn visible(terrain: &Terrain, cam: &PushbroomCamera, x: &Point3) -> Option<Point2> {
    let q = project_pushbroom(cam, x).ok()?;
    if !(q.x >= 0.0 && q.x <= (cam.cols - 1) as f64 && q.y <= (cam.rows - 1) as f64) {
        return None;
    }
    let (o, d) = cam.pixel_ray(q.y, q.x);
    let hit = terrain.intersect(o, d)?;
    ((hit - x.to_vector()).norm() <= 1e-6).then_some(q)
}

fn render(terrain: &Terrain, cam: &PushbroomCamera) -> GrayImage {
    let rows: Vec<Vec<f32>> = (0..cam.rows)
        .into_par_iter()
        .map(|row| {
            (0..cam.cols)
                .map(|col| {
                    let (o, d) = cam.pixel_ray(row as f64, col as f64);
                    match terrain.intersect(o, d) {
                        Some(p) => {
                            let on_wall = p.z < terrain.height(p.x, p.y) - 1e-6;
                            terrain.intensity(p.x, p.y, on_wall) as f32
                        }
                        None => 0.0,
                    }
                })
                .collect()
        })
        .collect();
    GrayImage::new(cam.cols, cam.rows, rows.concat())
}

fn tiles_of(img: &ImageSpec, d: usize) -> Vec<TileInfo> {
    let mut out = Vec::new();
    for (gr, &row) in tile_positions(img.camera.rows, d).iter().enumerate() {
        for (gc, &col) in tile_positions(img.camera.cols, d).iter().enumerate() {
            out.push(TileInfo {
                tile_id: format!("{}_r{gr}_c{gc}", img.id),
                image_id: img.id.clone(),
                row_offset: row,
                col_offset: col,
                size: d,
                grid_row: gr,
                grid_col: gc,
            });
        }
    }
    out
}

/// Per-image observations (noisy where `sigma > 0`) of every point.
fn observe(
    terrain: &Terrain,
    images: &[ImageSpec],
    points: &[Point3],
    sigma: f64,
    r: &mut ChaCha8Rng,
) -> Vec<Vec<Option<Point2>>> {
    let exact: Vec<Vec<Option<Point2>>> = images
        .iter()
        .map(|img| points.par_iter().map(|p| visible(terrain, &img.camera, p)).collect())
        .collect();
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    exact
        .into_iter()
        .map(|obs| {
            obs.into_iter()
                .map(|q| {
                    let (dx, dy) = if sigma > 0.0 { (noise.sample(r), noise.sample(r)) } else { (0.0, 0.0) };
                    q.map(|q| Point2::new(q.x + dx, q.y + dy))
                })
                .collect()
        })
        .collect()
}

/// Match tables between every tile pair of different images, in tile-frame
/// coordinates.
fn tables(images: &[ImageSpec], tiles: &[Vec<TileInfo>], obs: &[Vec<Option<Point2>>]) -> Vec<MatchTable> {
    let mut out = Vec::new();
    for a in 0..images.len() {
        for b in a + 1..images.len() {
            for ta in &tiles[a] {
                for tb in &tiles[b] {
                    let matches: Vec<Correspondence2D2D> = obs[a]
                        .iter()
                        .zip(&obs[b])
                        .filter_map(|(pa, pb)| {
                            let (pa, pb) = ((*pa)?, (*pb)?);
                            if !(ta.contains_image_point(pa.x, pa.y) && tb.contains_image_point(pb.x, pb.y)) {
                                return None;
                            }
                            let (xa, ya) = ta.image_to_tile(pa.x, pa.y);
                            let (xb, yb) = tb.image_to_tile(pb.x, pb.y);
                            Some(Correspondence2D2D::new(Point2::new(xa, ya), Point2::new(xb, yb)))
                        })
                        .collect();
                    if !matches.is_empty() {
                        out.push(MatchTable {
                            tile_a: ta.tile_id.clone(),
                            tile_b: tb.tile_id.clone(),
                            matches,
                        });
                    }
                }
            }
        }
    }
    out
}

fn tetra_volume(p: &[Point3; 4]) -> f64 {
    let e = |k: usize| p[k].to_vector() - p[0].to_vector();
    Matrix3::from_columns(&[e(1), e(2), e(3)]).determinant().abs() / 6.0
}

fn best_subset_volume(pts: &[Point3]) -> f64 {
    let n = pts.len();
    let mut best = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    best = best.max(tetra_volume(&[pts[a], pts[b], pts[c], pts[d]]));
                }
            }
        }
    }
    best
}

/// GCPs drawn on the surface, visible in at least two images, redrawn
/// until their best four-point subset spans a tetrahedron of useful volume.
fn draw_gcps(
    terrain: &Terrain,
    images: &[ImageSpec],
    count: usize,
    r: &mut ChaCha8Rng,
) -> Result<Vec<Gcp>, SyntheticError> {
    let (ex, ey) = terrain.spec.extent;
    let (zlo, zhi) = terrain.z_bounds();
    let min_volume = 1e-3 * ex * ey * (zhi - zlo).max(1e-9).min(ex.min(ey));
    for _ in 0..200 {
        let mut gcps = Vec::with_capacity(count);
        let mut tries = 0;
        while gcps.len() < count && tries < 100 * count {
            tries += 1;
            let (x, y) = (r.random_range(0.1 * ex..0.9 * ex), r.random_range(0.1 * ey..0.9 * ey));
            let p = Point3::new(x, y, terrain.height(x, y));
            let obs: Vec<(String, Point2)> = images
                .iter()
                .filter_map(|img| visible(terrain, &img.camera, &p).map(|q| (img.id.clone(), q)))
                .collect();
            if obs.len() >= 2 {
                gcps.push(Gcp {
                    gcp_id: format!("gcp{}", gcps.len()),
                    euclidean: p,
                    image_observations: obs,
                });
            }
        }
        let pts: Vec<Point3> = gcps.iter().map(|g| g.euclidean).collect();
        if gcps.len() == count && best_subset_volume(&pts) >= min_volume {
            return Ok(gcps);
        }
    }
    Err(SyntheticError::ConfigError(
        "could not draw non-coplanar GCPs; the scene may be too flat".into(),
    ))
}

/// Builds the scene, renders every image and emits exact correspondences.
///
/// Sparse matches come from `sparse_points` random surface samples and are
/// perturbed by `sigma` and contaminated by `outlier_fraction`; dense
/// matches come from the truth DEM cell centres and only carry the noise.
/// A correspondence is emitted only where the sample is visible in both
/// images. GCP observations are exact.
pub fn generate_scene(
    spec: &SceneSpec,
    images: &[ImageSpec],
    options: &SynthOptions,
) -> Result<SyntheticDataset, SyntheticError> {
    options.validate(images)?;
    for img in images {
        img.camera.validate()?;
    }
    let terrain = Terrain::new(spec)?;
    let mut r = ChaCha8Rng::seed_from_u64(options.seed);

    let width = (spec.extent.0 / options.dem_cell).floor() as usize;
    let height = (spec.extent.1 / options.dem_cell).floor() as usize;
    let mut dem = DemGrid::empty((0.0, 0.0), options.dem_cell, width, height)
        .map_err(|e| SyntheticError::ConfigError(e.to_string()))?;
    let mut dense_points = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y) = dem.center(col, row);
            let z = terrain.height(x, y);
            dem.set(col, row, Some(z));
            dense_points.push(Point3::new(x, y, z));
        }
    }
    let sparse_points: Vec<Point3> = (0..options.sparse_points)
        .map(|_| {
            let (x, y) = (r.random_range(0.0..spec.extent.0), r.random_range(0.0..spec.extent.1));
            Point3::new(x, y, terrain.height(x, y))
        })
        .collect();

    let tiles: Vec<Vec<TileInfo>> = images.iter().map(|i| tiles_of(i, options.tile_size)).collect();
    let sparse_obs = observe(&terrain, images, &sparse_points, options.sigma, &mut r);
    let dense_obs = observe(&terrain, images, &dense_points, options.sigma, &mut r);
    let dense_projections = images
        .iter()
        .map(|img| {
            let exact = dense_points.par_iter().map(|p| visible(&terrain, &img.camera, p)).collect();
            (img.id.clone(), exact)
        })
        .collect();

    let mut sparse = tables(images, &tiles, &sparse_obs);
    let mut planted = 0;
    let d = options.tile_size as f64;
    for t in &mut sparse {
        let n_bad = (options.outlier_fraction * t.matches.len() as f64).round() as usize;
        let mut idx: Vec<usize> = (0..t.matches.len()).collect();
        idx.shuffle(&mut r);
        for &k in idx.iter().take(n_bad) {
            t.matches[k].b = Point2::new(r.random_range(0.0..d - 1.0), r.random_range(0.0..d - 1.0));
        }
        planted += n_bad;
    }
    let total = sparse.iter().map(|t| t.matches.len()).sum();
    let dense = tables(images, &tiles, &dense_obs);
    let gcps = draw_gcps(&terrain, images, options.gcp_count, &mut r)?;

    let rendered = images.par_iter().map(|img| render(&terrain, &img.camera)).collect();
    Ok(SyntheticDataset {
        spec: spec.clone(),
        options: *options,
        images: images.to_vec(),
        rendered,
        tiles: TileManifest::new(options.tile_size, tiles.into_iter().flatten().collect()),
        sparse,
        dense,
        truth: GroundTruth {
            terrain,
            dense_points,
            sparse_points,
            dense_projections,
            gcps,
            dem,
            planted_outliers: planted,
            sparse_matches: total,
        },
    })
}

/// `dataset.json`: ties the files of a written dataset together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub spec: SceneSpec,
    pub options: SynthOptions,
    pub images: Vec<ImageSpec>,
    /// Paths relative to the dataset directory.
    pub image_files: Vec<String>,
    pub sparse_matches: String,
    pub dense_matches: String,
    pub gcps: String,
    pub truth_dem: String,
    pub planted_outliers: usize,
    pub total_sparse_matches: usize,
}

/// Writes images (8-bit PGM plus capture-time sidecars), both match CSVs,
/// the GCP CSV, the truth DEM and `dataset.json` under `dir`.
pub fn write_dataset(ds: &SyntheticDataset, dir: &Path) -> Result<DatasetManifest, SyntheticError> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| SyntheticError::io(&images_dir, e))?;
    let mut image_files = Vec::new();
    for (img, pixels) in ds.images.iter().zip(&ds.rendered) {
        let rel = format!("images/{}.pgm", img.id);
        let path = dir.join(&rel);
        write_pgm8(&path, pixels).map_err(|e| SyntheticError::io(&path, e))?;
        write_meta(&path, &ImageMeta { capture_time: img.capture_time }).map_err(|e| SyntheticError::io(&path, e))?;
        image_files.push(rel);
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA,
        spec: ds.spec.clone(),
        options: ds.options,
        images: ds.images.clone(),
        image_files,
        sparse_matches: "matches.csv".into(),
        dense_matches: "dense_matches.csv".into(),
        gcps: "gcps.csv".into(),
        truth_dem: "truth_dem.asc".into(),
        planted_outliers: ds.truth.planted_outliers,
        total_sparse_matches: ds.truth.sparse_matches,
    };
    let p = dir.join(&manifest.sparse_matches);
    save_matches(&p, &ds.sparse).map_err(|e| SyntheticError::io(&p, e))?;
    let p = dir.join(&manifest.dense_matches);
    save_matches(&p, &ds.dense).map_err(|e| SyntheticError::io(&p, e))?;
    let p = dir.join(&manifest.gcps);
    save_gcps(&p, &ds.truth.gcps).map_err(|e| SyntheticError::io(&p, e))?;
    let p = dir.join(&manifest.truth_dem);
    write_asc(&p, &ds.truth.dem).map_err(|e| SyntheticError::io(&p, e))?;
    let p = dir.join("dataset.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, text + "\n").map_err(|e| SyntheticError::io(&p, e))?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, SyntheticError> {
        let p = dir.join("dataset.json");
        let text = fs::read_to_string(&p).map_err(|e| SyntheticError::io(&p, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| SyntheticError::io(&p, e))?;
        if m.schema_version != DATASET_SCHEMA {
            return Err(SyntheticError::io(&p, format!("unsupported schema {}", m.schema_version)));
        }
        Ok(m)
    }
}
