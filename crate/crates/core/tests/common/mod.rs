//! Scene generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Matrix2x3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tilerecon::features::{build_tracks, FeatureTrack, MatchTable, TRACK_QUANTUM};
use tilerecon::imaging::{tile_positions, TileInfo, TileManifest};
use tilerecon::pipeline::{RunConfig, Workspace};
use tilerecon::sfm::Reconstruction;
use tilerecon::{AffineCamera, Correspondence2D2D, Point2, Point3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Well-conditioned random affine camera with pixel-scale translation.
pub fn random_camera(r: &mut ChaCha8Rng) -> AffineCamera {
    loop {
        let m = Matrix2x3::from_fn(|_, _| r.random_range(-2.0..2.0));
        let t = Vector2::new(r.random_range(-200.0..200.0), r.random_range(-200.0..200.0));
        let sv = m.singular_values();
        if sv.min() / sv.max() > 0.2 {
            return AffineCamera::new(m, t).unwrap();
        }
    }
}

pub fn random_points(r: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| Point3::new(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(-50.0..50.0)))
        .collect()
}

/// `n_cams` registered random cameras (tiles `t0..`, alternating between
/// images `A` and `B`) and `n_points` points seen by all of them, with
/// exact observations.
pub fn exact_reconstruction(seed: u64, n_cams: usize, n_points: usize) -> Reconstruction {
    let mut r = rng(seed);
    let tiles: Vec<String> = (0..n_cams).map(|i| format!("t{i}")).collect();
    let cameras: BTreeMap<String, AffineCamera> = tiles.iter().map(|t| (t.clone(), random_camera(&mut r))).collect();
    let points: BTreeMap<usize, Point3> = random_points(&mut r, n_points).into_iter().enumerate().collect();
    let observations = points
        .iter()
        .map(|(&k, p)| (k, tiles.iter().map(|t| (t.clone(), cameras[t].project(p))).collect()))
        .collect();
    Reconstruction {
        group_id: "g0".into(),
        cameras,
        points,
        observations,
        rejected: BTreeSet::new(),
        tile_images: tiles
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), if i % 2 == 0 { "A" } else { "B" }.to_string()))
            .collect(),
        tile_grid: tiles.iter().enumerate().map(|(i, t)| (t.clone(), (i / 2, 0))).collect(),
        registration_order: tiles,
    }
}

/// Two 250x250 images `A` and `B` under affine cameras, each cut into 2x2
/// tiles of 150 px, with scene points matched between every cross-image
/// tile pair that sees them. A fraction `outliers` of each table has its
/// second position replaced by a uniform random one.
pub struct TiledScene {
    pub manifest: TileManifest,
    pub tables: Vec<MatchTable>,
    pub tracks: Vec<FeatureTrack>,
    pub image_cameras: BTreeMap<String, AffineCamera>,
    pub points: Vec<Point3>,
    /// Noisy full-image observation of each point in each image.
    pub observed: Vec<BTreeMap<String, Point2>>,
    /// Points with at least one uncorrupted match.
    pub clean: BTreeSet<usize>,
    /// Points with at least one corrupted match.
    pub corrupted: BTreeSet<usize>,
}

pub fn tiled_scene(seed: u64, n_points: usize, sigma: f64, outliers: f64) -> TiledScene {
    let mut r = rng(seed);
    let jitter = |r: &mut ChaCha8Rng, s: f64| r.random_range(-s..s);
    let mut image_cameras = BTreeMap::new();
    for (id, base) in [("A", [[2.0, 0.0, 0.3], [0.0, 2.0, 0.2]]), ("B", [[1.9, 0.1, -0.5], [-0.1, 2.0, 0.1]])] {
        let m = Matrix2x3::from_fn(|i, j| base[i][j] + jitter(&mut r, 0.05));
        let t = Vector2::new(125.0 + jitter(&mut r, 3.0), 125.0 + jitter(&mut r, 3.0));
        image_cameras.insert(id.to_string(), AffineCamera::new(m, t).unwrap());
    }
    let points: Vec<Point3> = (0..n_points)
        .map(|_| Point3::new(jitter(&mut r, 58.0), jitter(&mut r, 58.0), jitter(&mut r, 20.0)))
        .collect();
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut tiles = Vec::new();
    for id in ["A", "B"] {
        for (gr, &row) in tile_positions(250, 150).iter().enumerate() {
            for (gc, &col) in tile_positions(250, 150).iter().enumerate() {
                tiles.push(TileInfo {
                    tile_id: format!("{id}_r{gr}_c{gc}"),
                    image_id: id.to_string(),
                    row_offset: row,
                    col_offset: col,
                    size: 150,
                    grid_row: gr,
                    grid_col: gc,
                });
            }
        }
    }
    let observed: Vec<BTreeMap<String, Point2>> = points
        .iter()
        .map(|p| {
            image_cameras
                .iter()
                .map(|(id, cam)| {
                    let q = cam.project(p);
                    let (dx, dy) = if sigma > 0.0 { (noise.sample(&mut r), noise.sample(&mut r)) } else { (0.0, 0.0) };
                    (id.clone(), Point2::new(q.x + dx, q.y + dy))
                })
                .collect()
        })
        .collect();
    let mut tables = Vec::new();
    let mut clean = BTreeSet::new();
    let mut corrupted = BTreeSet::new();
    for ta in tiles.iter().filter(|t| t.image_id == "A") {
        for tb in tiles.iter().filter(|t| t.image_id == "B") {
            let mut matches = Vec::new();
            let mut sources = Vec::new();
            for (k, obs) in observed.iter().enumerate() {
                let (pa, pb) = (obs["A"], obs["B"]);
                if ta.contains_image_point(pa.x, pa.y) && tb.contains_image_point(pb.x, pb.y) {
                    let (xa, ya) = ta.image_to_tile(pa.x, pa.y);
                    let (xb, yb) = tb.image_to_tile(pb.x, pb.y);
                    matches.push(Correspondence2D2D::new(Point2::new(xa, ya), Point2::new(xb, yb)));
                    sources.push(k);
                }
            }
            let n_bad = (outliers * matches.len() as f64).round() as usize;
            for m in matches.iter_mut().take(n_bad) {
                m.b = Point2::new(r.random_range(0.0..149.0), r.random_range(0.0..149.0));
            }
            corrupted.extend(sources.iter().take(n_bad).copied());
            clean.extend(sources.into_iter().skip(n_bad));
            if !matches.is_empty() {
                tables.push(MatchTable {
                    tile_a: ta.tile_id.clone(),
                    tile_b: tb.tile_id.clone(),
                    matches,
                });
            }
        }
    }
    let manifest = TileManifest::new(150, tiles);
    let tracks = build_tracks(&tables, &manifest);
    TiledScene {
        manifest,
        tables,
        tracks,
        image_cameras,
        points,
        observed,
        clean,
        corrupted,
    }
}

impl TiledScene {
    pub fn image_ids(&self) -> Vec<String> {
        self.image_cameras.keys().cloned().collect()
    }

    /// Index of the scene point behind a reconstructed track, found through
    /// the track's observation in image `A`, which outliers never replace.
    pub fn truth_index(&self, recon: &Reconstruction, track: usize) -> Option<usize> {
        let (tile, p) = recon.observations[&track].iter().find(|(t, _)| t.starts_with("A_"))?;
        let info = self.manifest.get(tile)?;
        let (x, y) = info.tile_to_image(p.x, p.y);
        let q = Point2::new(x, y);
        let (k, d) = self
            .observed
            .iter()
            .enumerate()
            .map(|(k, o)| (k, o["A"].distance(&q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d <= TRACK_QUANTUM).then_some(k)
    }
}

/// Writes the synthetic dataset configured by `cfg` into `ws`.
pub fn synthesize(ws: &Workspace, cfg: &RunConfig) {
    ws.init().unwrap();
    tilerecon::pipeline::cmd_synth(ws, cfg).unwrap();
}

pub fn config(toml: &str) -> RunConfig {
    RunConfig::parse(toml).unwrap()
}

/// The repository's synthetic end-to-end configuration.
pub fn synthetic_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    RunConfig::load(&path).unwrap()
}
