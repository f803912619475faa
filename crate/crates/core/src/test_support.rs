//! Random generators shared by unit tests.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix2x3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::{build_tracks, FeatureTrack, MatchTable};
use crate::geometry::{AffineCamera, Correspondence2D2D, Point2, Point3};
use crate::imaging::{tile_positions, TileInfo, TileManifest};
use crate::sfm::Reconstruction;

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
        .map(|_| {
            Point3::new(
                r.random_range(-50.0..50.0),
                r.random_range(-50.0..50.0),
                r.random_range(-50.0..50.0),
            )
        })
        .collect()
}

/// Reconstruction with `n_cams` registered random cameras (tiles `t0..`,
/// alternating between images `A` and `B`) and `n_points` points seen by
/// every camera. Observations carry Gaussian noise of `sigma` pixels; the
/// installed cameras and points are the noiseless truth, also returned.
pub fn synthetic_reconstruction(
    seed: u64,
    n_cams: usize,
    n_points: usize,
    sigma: f64,
) -> (Reconstruction, BTreeMap<usize, Point3>) {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let tiles: Vec<String> = (0..n_cams).map(|i| format!("t{i}")).collect();
    let cameras: BTreeMap<String, AffineCamera> =
        tiles.iter().map(|t| (t.clone(), random_camera(&mut r))).collect();
    let truth: BTreeMap<usize, Point3> = random_points(&mut r, n_points).into_iter().enumerate().collect();
    let mut observations = BTreeMap::new();
    for (&track, p) in &truth {
        let obs: Vec<(String, Point2)> = tiles
            .iter()
            .map(|t| {
                let q = cameras[t].project(p);
                let (dx, dy) = if sigma > 0.0 {
                    (noise.sample(&mut r), noise.sample(&mut r))
                } else {
                    (0.0, 0.0)
                };
                (t.clone(), Point2::new(q.x + dx, q.y + dy))
            })
            .collect();
        observations.insert(track, obs);
    }
    let recon = Reconstruction {
        group_id: "g0".into(),
        cameras,
        points: truth.clone(),
        observations,
        rejected: BTreeSet::new(),
        tile_images: tiles
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), if i % 2 == 0 { "A" } else { "B" }.to_string()))
            .collect(),
        tile_grid: tiles.iter().enumerate().map(|(i, t)| (t.clone(), (i / 2, 0))).collect(),
        registration_order: tiles,
    };
    (recon, truth)
}

/// Two 250x250 images (`A`, `B`), each cut into 2x2 tiles of 150 px, with
/// random scene points matched between every cross-image tile pair that
/// sees them. A fraction `outliers` of each table's matches is replaced by
/// random positions in the second tile.
pub struct TiledScene {
    pub manifest: TileManifest,
    pub tables: Vec<MatchTable>,
    pub tracks: Vec<FeatureTrack>,
    pub image_cameras: BTreeMap<String, AffineCamera>,
    pub points: Vec<Point3>,
    /// Noisy full-image observation of each point in each image.
    pub observed: Vec<BTreeMap<String, Point2>>,
}

pub fn tiled_scene(seed: u64, n_points: usize, sigma: f64, outliers: f64) -> TiledScene {
    let mut r = rng(seed);
    let jitter = |r: &mut ChaCha8Rng, s: f64| r.random_range(-s..s);
    let mut image_cameras = BTreeMap::new();
    for (id, base) in [
        ("A", [[2.0, 0.0, 0.3], [0.0, 2.0, 0.2]]),
        ("B", [[1.9, 0.1, -0.5], [-0.1, 2.0, 0.1]]),
    ] {
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
    // Per-point noisy observation in each image, shared by all its tiles.
    let observed: Vec<BTreeMap<String, Point2>> = points
        .iter()
        .map(|p| {
            image_cameras
                .iter()
                .map(|(id, cam)| {
                    let q = cam.project(p);
                    let (dx, dy) = if sigma > 0.0 {
                        (noise.sample(&mut r), noise.sample(&mut r))
                    } else {
                        (0.0, 0.0)
                    };
                    (id.clone(), Point2::new(q.x + dx, q.y + dy))
                })
                .collect()
        })
        .collect();
    let mut tables = Vec::new();
    for ta in tiles.iter().filter(|t| t.image_id == "A") {
        for tb in tiles.iter().filter(|t| t.image_id == "B") {
            let mut matches = Vec::new();
            for obs in &observed {
                let (pa, pb) = (obs["A"], obs["B"]);
                if ta.contains_image_point(pa.x, pa.y) && tb.contains_image_point(pb.x, pb.y) {
                    let (xa, ya) = ta.image_to_tile(pa.x, pa.y);
                    let (xb, yb) = tb.image_to_tile(pb.x, pb.y);
                    matches.push(Correspondence2D2D::new(Point2::new(xa, ya), Point2::new(xb, yb)));
                }
            }
            let n_bad = (outliers * matches.len() as f64).round() as usize;
            for m in matches.iter_mut().take(n_bad) {
                m.b = Point2::new(r.random_range(0.0..149.0), r.random_range(0.0..149.0));
            }
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
    }
}

/// Every tile of `scene` registered, with cameras expressed in the affine
/// frame `X_A` related to the scene frame by `X_E = h.apply(X_A)`.
pub fn registered_scene(scene: &TiledScene, h: &crate::geometry::AffineUpgrade) -> Reconstruction {
    let images = vec!["A".to_string(), "B".to_string()];
    let mut recon = Reconstruction::new("g0", &images, &scene.manifest, &[]);
    for t in &scene.manifest.tiles {
        let cam = scene.image_cameras[&t.image_id];
        let affine = AffineCamera::new(cam.m * h.linear(), cam.m * h.translation() + cam.t)
            .unwrap()
            .cropped(t.col_offset as f64, t.row_offset as f64);
        recon.cameras.insert(t.tile_id.clone(), affine);
        recon.registration_order.push(t.tile_id.clone());
    }
    recon
}

/// A well-conditioned, non-trivial affine map of 3-space.
pub fn distortion() -> crate::geometry::AffineUpgrade {
    crate::geometry::AffineUpgrade::from_parts(
        nalgebra::Matrix3::new(1.3, 0.2, -0.1, 0.05, 0.9, 0.3, 0.1, -0.2, 1.7),
        nalgebra::Vector3::new(4.0, -7.0, 2.5),
    )
}
