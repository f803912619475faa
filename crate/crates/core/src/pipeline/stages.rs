use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::{write_report, RunReport, StageStatus};
use super::workspace::{StageManifest, Workspace, STAGE_MANIFEST_SCHEMA};
use super::{MatcherKind, PipelineError, RunConfig};
use crate::dense::{build_dense_tracks, densify, lift_disparities, read_ply, rectify_and_match, write_ply};
use crate::euclidean::{fuse_groups, load_gcps, upgrade_group};
use crate::evaluation::{
    align_dems, completeness, error_map, median_error, rasterize, read_asc, write_asc, write_error_pgm16, DemGrid,
};
use crate::features::{build_tracks, load_matches, match_tile_pairs, save_matches, MatchTable};
use crate::geometry::{Correspondence2D2D, Point3};
use crate::imaging::{
    build_tile_graph, crop_tiles, group_by_time, load_image, GrayImage, ImageGroup, SourceImage, Tile, TileGraph,
    TileManifest,
};
use crate::sfm::{load_checkpoint, run_incremental, save_checkpoint};
use crate::synthetic::{generate_scene, stereo_cameras, write_dataset, DatasetManifest};

/// Runs `body` unless `stage` is up to date with `inputs`. The previous
/// manifest is removed first, so a failure leaves the stage incomplete
/// while earlier stages stay intact.
fn run_stage(
    ws: &Workspace,
    cfg: &RunConfig,
    stage: &str,
    inputs: &[PathBuf],
    body: impl FnOnce() -> Result<(Vec<PathBuf>, serde_json::Value), PipelineError>,
) -> Result<StageStatus, PipelineError> {
    let start = Instant::now();
    let attempt = || {
        ws.init()?;
        let config_hash = cfg.stage_hash(stage);
        let inputs = ws.hash_all(inputs)?;
        if ws.up_to_date(stage, &config_hash, &inputs) {
            log::info!("{stage}: up to date, skipped");
            return Ok(false);
        }
        ws.remove_manifest(stage)?;
        let (outputs, summary) = body()?;
        let outputs = ws.hash_all(&outputs)?;
        ws.write_manifest(&StageManifest {
            schema_version: STAGE_MANIFEST_SCHEMA,
            stage: stage.into(),
            config_hash,
            inputs,
            outputs,
            summary,
        })?;
        Ok(true)
    };
    let ran = attempt().map_err(|e: PipelineError| e.at(stage))?;
    Ok(StageStatus {
        stage: stage.into(),
        ran,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Output paths recorded by a completed upstream stage.
fn outputs_of(ws: &Workspace, stage: &str, by: &str) -> Result<Vec<PathBuf>, PipelineError> {
    Ok(ws.require(stage, by)?.outputs.keys().map(PathBuf::from).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::new("", "FormatError", format!("{}: {e}", path.display())))
}

fn with_ext(p: &Path, suffix: &str) -> bool {
    p.to_string_lossy().ends_with(suffix)
}

/// Writes a synthetic dataset under `synth.out`.
pub fn cmd_synth(ws: &Workspace, cfg: &RunConfig) -> Result<DatasetManifest, PipelineError> {
    let run = || {
        let spec = cfg.synth.scene(cfg.seed);
        let images = stereo_cameras(&spec, cfg.synth.groups, cfg.synth.gsd, cfg.synth.perspective, cfg.seed);
        let options = cfg.synth.options(cfg.tiling.effective_size(), cfg.seed);
        let ds = generate_scene(&spec, &images, &options)?;
        let out = ws.resolve(&cfg.synth.out);
        Ok(write_dataset(&ds, &out)?)
    };
    run().map_err(|e: PipelineError| e.at("synth"))
}

/// `images/groups.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GroupsFile {
    images: Vec<ImageEntry>,
    groups: Vec<ImageGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ImageEntry {
    id: String,
    path: String,
    width: usize,
    height: usize,
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
        let p = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let ext = p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
        if ext == "pgm" || ext == "png" {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn sidecar(p: &Path) -> PathBuf {
    let stem = p.file_stem().unwrap_or_default().to_string_lossy();
    p.with_file_name(format!("{stem}.meta.json"))
}

/// Loads the images and splits them into capture-time groups.
pub fn cmd_group(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let dir = ws.resolve(&cfg.input.images);
    let files = image_files(&dir).map_err(|e| e.at("group"))?;
    let mut inputs = files.clone();
    inputs.extend(files.iter().map(|p| sidecar(p)).filter(|p| p.exists()));
    inputs.sort();
    run_stage(ws, cfg, "group", &inputs, || {
        let mut images = Vec::new();
        let mut entries = Vec::new();
        for p in &files {
            let img = load_image(p)?;
            entries.push(ImageEntry {
                id: img.id.clone(),
                path: ws.key(p),
                width: img.width(),
                height: img.height(),
            });
            images.push((img.id.clone(), img.capture_time));
        }
        let groups = group_by_time(&images, cfg.tiling.max_gap_days)?;
        let out = ws.path("images/groups.json");
        write_json(&out, &GroupsFile { images: entries, groups: groups.clone() })?;
        let summary = json!({
            "images": files.len(),
            "groups": groups.iter().map(|g| json!({"group_id": g.group_id, "images": g.image_ids})).collect::<Vec<_>>(),
        });
        Ok((vec![out], summary))
    })
}

fn load_groups(ws: &Workspace) -> Result<GroupsFile, PipelineError> {
    read_json(&ws.path("images/groups.json"))
}

fn load_sources(ws: &Workspace, groups: &GroupsFile) -> Result<BTreeMap<String, SourceImage>, PipelineError> {
    groups
        .images
        .iter()
        .map(|e| Ok((e.id.clone(), load_image(&ws.resolve(Path::new(&e.path)))?)))
        .collect()
}

fn group_inputs(ws: &Workspace, by: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let m = ws.require("group", by)?;
    Ok(m.inputs.keys().chain(m.outputs.keys()).map(PathBuf::from).collect())
}

/// Crops every image into `d x d` tiles and builds the tile graph.
pub fn cmd_tile(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let d = cfg.tiling.effective_size();
    if d != cfg.tiling.size {
        log::warn!("tile size {} rounded down to {d}", cfg.tiling.size);
    }
    let inputs = group_inputs(ws, "tile").map_err(|e| e.at("tile"))?;
    run_stage(ws, cfg, "tile", &inputs, || {
        let groups = load_groups(ws)?;
        let sources = load_sources(ws, &groups)?;
        let mut all = Vec::new();
        let mut graph = TileGraph::default();
        for g in &groups.groups {
            let mut by_image = Vec::new();
            for id in &g.image_ids {
                let tiles: Vec<_> = crop_tiles(&sources[id], d)?.into_iter().map(|t| t.info).collect();
                all.extend(tiles.iter().cloned());
                by_image.push((id.clone(), tiles));
            }
            let part = build_tile_graph(&by_image, &BTreeMap::new());
            graph.nodes.extend(part.nodes);
            graph.intra_edges.extend(part.intra_edges);
            graph.inter_edges.extend(part.inter_edges);
        }
        let manifest = TileManifest::new(d, all);
        let tiles_path = ws.path("tiles/tiles.json");
        manifest.save(&tiles_path)?;
        let graph_path = ws.path("tiles/graph.json");
        write_json(&graph_path, &graph)?;
        let summary = json!({
            "tile_size": d,
            "tiles": manifest.tiles.len(),
            "intra_edges": graph.intra_edges.len(),
            "inter_edges": graph.inter_edges.len(),
        });
        Ok((vec![tiles_path, graph_path], summary))
    })
}

fn load_tiles(ws: &Workspace) -> Result<TileManifest, PipelineError> {
    Ok(TileManifest::load(&ws.path("tiles/tiles.json"))?)
}

/// Tile pixels for the tiles of `manifest` whose id passes `keep`.
fn tile_pixels(
    sources: &BTreeMap<String, SourceImage>,
    manifest: &TileManifest,
    keep: impl Fn(&str) -> bool,
) -> BTreeMap<String, GrayImage> {
    manifest
        .tiles
        .iter()
        .filter(|t| keep(&t.tile_id))
        .map(|t| (t.tile_id.clone(), sources[&t.image_id].pixels.crop(t.col_offset, t.row_offset, t.size, t.size)))
        .collect()
}

fn count(tables: &[MatchTable]) -> usize {
    tables.iter().map(MatchTable::count).sum()
}

/// Sparse matching with the built-in detector, or import of external
/// match files.
pub fn cmd_match(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let prepare = || {
        let mut inputs = group_inputs(ws, "match")?;
        inputs.extend(outputs_of(ws, "tile", "match")?);
        if cfg.matcher.kind == MatcherKind::External {
            inputs.extend(cfg.matcher.sparse.iter().cloned());
            inputs.extend(cfg.matcher.dense.iter().cloned());
        }
        Ok(inputs)
    };
    let inputs = prepare().map_err(|e: PipelineError| e.at("match"))?;
    run_stage(ws, cfg, "match", &inputs, || {
        let manifest = load_tiles(ws)?;
        let sparse_path = ws.path("matches/sparse.csv");
        let mut outputs = vec![sparse_path.clone()];
        let mut summary = json!({"kind": cfg.matcher.kind});
        let sparse = match cfg.matcher.kind {
            MatcherKind::Builtin => {
                let groups = load_groups(ws)?;
                let sources = load_sources(ws, &groups)?;
                let graph: TileGraph = read_json(&ws.path("tiles/graph.json"))?;
                let pixels = tile_pixels(&sources, &manifest, |_| true);
                let tiles: Vec<Tile> = manifest
                    .tiles
                    .iter()
                    .map(|info| Tile {
                        info: info.clone(),
                        pixels: pixels[&info.tile_id].clone(),
                    })
                    .collect();
                match_tile_pairs(&tiles, &graph.pairs(), &cfg.matcher.detector, cfg.matcher.ratio)
            }
            MatcherKind::External => {
                let src = cfg.matcher.sparse.as_ref().expect("validated");
                let tables = load_matches(&ws.resolve(src), &manifest)?;
                if let Some(dense) = &cfg.matcher.dense {
                    let dense_tables = load_matches(&ws.resolve(dense), &manifest)?;
                    let p = ws.path("matches/dense.csv");
                    save_matches(&p, &dense_tables)?;
                    summary["dense_tables"] = json!(dense_tables.len());
                    summary["dense_matches"] = json!(count(&dense_tables));
                    outputs.push(p);
                }
                tables
            }
        };
        save_matches(&sparse_path, &sparse)?;
        summary["tables"] = json!(sparse.len());
        summary["matches"] = json!(count(&sparse));
        Ok((outputs, summary))
    })
}

/// Incremental affine SfM per group; one checkpoint per reconstructed group.
pub fn cmd_sfm(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let prepare = || {
        let mut inputs = outputs_of(ws, "group", "sfm")?;
        inputs.extend(outputs_of(ws, "tile", "sfm")?.into_iter().filter(|p| with_ext(p, "tiles.json")));
        inputs.extend(outputs_of(ws, "match", "sfm")?.into_iter().filter(|p| with_ext(p, "sparse.csv")));
        Ok(inputs)
    };
    let inputs = prepare().map_err(|e: PipelineError| e.at("sfm"))?;
    run_stage(ws, cfg, "sfm", &inputs, || {
        let groups = load_groups(ws)?;
        let manifest = load_tiles(ws)?;
        let tables = load_matches(&ws.path("matches/sparse.csv"), &manifest)?;
        let tracks = build_tracks(&tables, &manifest);
        let sfm_cfg = cfg.sfm_config();
        let mut outputs = Vec::new();
        let mut reports = Vec::new();
        let mut first_error = None;
        for g in &groups.groups {
            match run_incremental(&g.group_id, &g.image_ids, &manifest, &tables, &tracks, &sfm_cfg) {
                Ok(out) => {
                    let p = ws.path(&format!("sfm/{}.json", g.group_id));
                    save_checkpoint(&out.reconstruction, &p)?;
                    outputs.push(p);
                    let recon = &out.reconstruction;
                    reports.push(json!({
                        "group_id": g.group_id,
                        "status": out.status,
                        "initial_pair": out.init.tile_pair,
                        "registered": recon.cameras.len(),
                        "unregistered": out.unregistered,
                        "points": recon.points.len(),
                        "rms": recon.rms(),
                        "bundle_adjustments": out.ba_reports.iter().map(|r| json!({
                            "scope": r.scope,
                            "initial_cost": r.initial_cost,
                            "final_cost": r.final_cost,
                            "iterations": r.iterations,
                        })).collect::<Vec<_>>(),
                        "warnings": out.warnings,
                    }));
                }
                Err(e) => {
                    log::warn!("group {}: {e}", g.group_id);
                    reports.push(json!({"group_id": g.group_id, "error": e.kind(), "message": e.to_string()}));
                    first_error.get_or_insert(PipelineError::from(e));
                }
            }
        }
        if outputs.is_empty() {
            return Err(first_error
                .unwrap_or_else(|| PipelineError::new("", "NoViablePair", "no image groups to reconstruct")));
        }
        Ok((outputs, json!({"tracks": tracks.len(), "groups": reports})))
    })
}

fn group_of(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().split('.').next().unwrap_or_default().to_string()
}

/// Dense matching, dense tracks and densification per reconstructed group.
pub fn cmd_dense(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let prepare = || {
        let mut inputs = group_inputs(ws, "dense")?;
        inputs.extend(outputs_of(ws, "tile", "dense")?.into_iter().filter(|p| with_ext(p, "tiles.json")));
        inputs.extend(outputs_of(ws, "match", "dense")?);
        inputs.extend(outputs_of(ws, "sfm", "dense")?);
        Ok(inputs)
    };
    let inputs = prepare().map_err(|e: PipelineError| e.at("dense"))?;
    let checkpoints = outputs_of(ws, "sfm", "dense").map_err(|e| e.at("dense"))?;
    run_stage(ws, cfg, "dense", &inputs, || {
        let groups = load_groups(ws)?;
        let sources = load_sources(ws, &groups)?;
        let manifest = load_tiles(ws)?;
        let sparse = load_matches(&ws.path("matches/sparse.csv"), &manifest)?;
        let dense_path = ws.path("matches/dense.csv");
        let external = if dense_path.exists() { Some(load_matches(&dense_path, &manifest)?) } else { None };
        let mut outputs = Vec::new();
        let mut reports = Vec::new();
        for ck in &checkpoints {
            let recon = load_checkpoint(&ws.resolve(ck))?;
            let registered = |t: &str| recon.cameras.contains_key(t);
            let pixels = tile_pixels(&sources, &manifest, registered);
            let mut failed_pairs = 0;
            let pairs: Vec<(String, String, Vec<Correspondence2D2D>)> = match &external {
                Some(tables) => tables
                    .iter()
                    .filter(|t| registered(&t.tile_a) && registered(&t.tile_b))
                    .map(|t| (t.tile_a.clone(), t.tile_b.clone(), t.matches.clone()))
                    .collect(),
                None => {
                    let mut out = Vec::new();
                    for (k, t) in sparse.iter().enumerate() {
                        let cross = recon.tile_images.get(&t.tile_a) != recon.tile_images.get(&t.tile_b);
                        if !(registered(&t.tile_a) && registered(&t.tile_b) && cross)
                            || t.count() < cfg.dense.min_pair_matches
                        {
                            continue;
                        }
                        let ransac = cfg.ransac_config(k as u64);
                        match rectify_and_match(
                            &pixels[&t.tile_a],
                            &pixels[&t.tile_b],
                            &t.matches,
                            &cfg.dense.zncc,
                            cfg.dense.margin,
                            Some(&ransac),
                        ) {
                            Ok((dmap, pair)) => out.push((
                                t.tile_a.clone(),
                                t.tile_b.clone(),
                                lift_disparities(&dmap, &pair, cfg.dense.stride),
                            )),
                            Err(e) => {
                                log::warn!("dense pair {} / {}: {e}", t.tile_a, t.tile_b);
                                failed_pairs += 1;
                            }
                        }
                    }
                    out
                }
            };
            let tracks = build_dense_tracks(&pairs, &pixels, &cfg.dense.photo);
            let cloud = densify(&recon, &tracks, &cfg.ba)?;
            let p = ws.path(&format!("dense/{}.ply", recon.group_id));
            let pts: Vec<(Point3, u32)> = cloud.points.iter().map(|d| (d.point, d.track_id as u32)).collect();
            write_ply(&p, &pts)?;
            outputs.push(p);
            reports.push(json!({
                "group_id": recon.group_id,
                "pairs": pairs.len(),
                "failed_pairs": failed_pairs,
                "dense_matches": pairs.iter().map(|(_, _, m)| m.len()).sum::<usize>(),
                "tracks": tracks.len(),
                "points": cloud.points.len(),
                "densify": cloud.report,
            }));
        }
        Ok((outputs, json!({"groups": reports})))
    })
}

/// Lifts each group's dense cloud to metric coordinates with the GCPs.
pub fn cmd_upgrade(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let prepare = || {
        let mut inputs = vec![cfg.input.gcps.clone()];
        inputs.extend(outputs_of(ws, "tile", "upgrade")?.into_iter().filter(|p| with_ext(p, "tiles.json")));
        inputs.extend(outputs_of(ws, "sfm", "upgrade")?);
        inputs.extend(outputs_of(ws, "dense", "upgrade")?);
        Ok(inputs)
    };
    let inputs = prepare().map_err(|e: PipelineError| e.at("upgrade"))?;
    let clouds = outputs_of(ws, "dense", "upgrade").map_err(|e| e.at("upgrade"))?;
    run_stage(ws, cfg, "upgrade", &inputs, || {
        let manifest = load_tiles(ws)?;
        let gcps = load_gcps(&ws.resolve(&cfg.input.gcps))?;
        let mut outputs = Vec::new();
        let mut reports = Vec::new();
        let mut first_error = None;
        for cloud_path in &clouds {
            let gid = group_of(cloud_path);
            let recon = load_checkpoint(&ws.path(&format!("sfm/{gid}.json")))?;
            let dense = read_ply(&ws.resolve(cloud_path))?;
            let points: Vec<Point3> = dense.iter().map(|(p, _)| *p).collect();
            match upgrade_group(&recon, &points, &gcps, &manifest, &cfg.upgrade_ransac()) {
                Ok(out) => {
                    let p = ws.path(&format!("euclidean/{gid}.ply"));
                    let pts: Vec<(Point3, u32)> = out.cloud.iter().zip(&dense).map(|(q, (_, id))| (*q, *id)).collect();
                    write_ply(&p, &pts)?;
                    let u = ws.path(&format!("euclidean/{gid}.upgrade.json"));
                    write_json(&u, &json!({"upgrade": out.upgrade, "residuals": out.residuals, "skipped": out.skipped}))?;
                    outputs.push(p);
                    outputs.push(u);
                    reports.push(json!({
                        "group_id": gid,
                        "gcps_used": out.residuals.len(),
                        "gcp_inliers": out.residuals.iter().filter(|r| r.inlier).count(),
                        "gcp_rms": out.inlier_rms(),
                        "skipped": out.skipped,
                        "points": out.cloud.len(),
                    }));
                }
                Err(e) => {
                    log::warn!("group {gid}: {e}");
                    reports.push(json!({"group_id": gid, "error": e.kind(), "message": e.to_string()}));
                    first_error.get_or_insert(PipelineError::from(e));
                }
            }
        }
        if outputs.is_empty() {
            return Err(first_error.unwrap_or_else(|| PipelineError::new("", "NoData", "no dense clouds to upgrade")));
        }
        Ok((outputs, json!({"groups": reports})))
    })
}

/// ICP-aligns and merges the metric group clouds into `euclidean/fused.ply`.
pub fn cmd_fuse(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let clouds: Vec<PathBuf> = outputs_of(ws, "upgrade", "fuse")
        .map_err(|e| e.at("fuse"))?
        .into_iter()
        .filter(|p| with_ext(p, ".ply"))
        .collect();
    run_stage(ws, cfg, "fuse", &clouds, || {
        let mut groups = Vec::new();
        let mut points = Vec::new();
        for p in &clouds {
            groups.push(group_of(p));
            points.push(read_ply(&ws.resolve(p))?.into_iter().map(|(q, _)| q).collect::<Vec<_>>());
        }
        let out = fuse_groups(&points, &cfg.fuse.icp, cfg.fuse.voxel_size);
        let p = ws.path("euclidean/fused.ply");
        let pts: Vec<(Point3, u32)> = out.cloud.iter().enumerate().map(|(k, q)| (*q, k as u32)).collect();
        write_ply(&p, &pts)?;
        let alignments: Vec<_> = groups
            .iter()
            .zip(&out.transforms)
            .zip(&out.reports)
            .map(|((g, t), r)| {
                json!({
                    "group_id": g,
                    "transform": t,
                    "icp_iterations": r.as_ref().map(|r| r.iterations),
                    "icp_rms": r.as_ref().and_then(|r| r.rms_history.last().copied()),
                })
            })
            .collect();
        let summary = json!({
            "reference": groups.get(out.reference),
            "points": out.cloud.len(),
            "alignments": alignments,
            "warnings": out.warnings,
        });
        Ok((vec![p], summary))
    })
}

/// Height-error metrics of the fused cloud's DEM against the truth DEM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub cells: usize,
    pub truth_cells: usize,
    pub dem_cells: usize,
    pub shift: (i64, i64),
    pub vertical_offset: f64,
    pub median_error: f64,
    pub threshold: f64,
    /// Percent.
    pub completeness: f64,
}

/// Rasterizes the fused cloud and, when a truth DEM is configured, aligns
/// and scores it.
pub fn cmd_eval(ws: &Workspace, cfg: &RunConfig) -> Result<StageStatus, PipelineError> {
    let prepare = || {
        let mut inputs = outputs_of(ws, "fuse", "eval")?;
        inputs.extend(cfg.input.truth_dem.iter().cloned());
        Ok(inputs)
    };
    let inputs = prepare().map_err(|e: PipelineError| e.at("eval"))?;
    run_stage(ws, cfg, "eval", &inputs, || {
        let cloud: Vec<Point3> = read_ply(&ws.path("euclidean/fused.ply"))?.into_iter().map(|(p, _)| p).collect();
        let dem_path = ws.path("eval/dem.asc");
        let Some(truth_path) = &cfg.input.truth_dem else {
            let dem = bounding_dem(&cloud, cfg.eval.gsd)?;
            write_asc(&dem_path, &dem)?;
            return Ok((vec![dem_path], json!({"dem_cells": dem.valid_count(), "metrics": null})));
        };
        let truth = read_asc(&ws.resolve(truth_path))?;
        if (truth.cell - cfg.eval.gsd).abs() > 1e-12 * truth.cell {
            return Err(PipelineError::new(
                "",
                "GridMismatch",
                format!("eval.gsd {} differs from the truth DEM cell {}", cfg.eval.gsd, truth.cell),
            ));
        }
        let dem = rasterize(&cloud, truth.origin, truth.cell, truth.width, truth.height)?;
        let aligned = align_dems(&dem, &truth, cfg.eval.max_shift)?;
        let map = error_map(&aligned.aligned, &truth)?;
        let metrics = EvalMetrics {
            cells: truth.width * truth.height,
            truth_cells: truth.valid_count(),
            dem_cells: dem.valid_count(),
            shift: (aligned.dx, aligned.dy),
            vertical_offset: aligned.dz,
            median_error: median_error(&map)?,
            threshold: cfg.eval.threshold,
            completeness: completeness(&map, cfg.eval.threshold)?,
        };
        write_asc(&dem_path, &dem)?;
        let err_path = ws.path("eval/error.pgm");
        write_error_pgm16(&err_path, &map)?;
        let metrics_path = ws.path("eval/metrics.json");
        write_json(&metrics_path, &metrics)?;
        Ok((vec![dem_path, err_path, metrics_path], json!({"metrics": metrics})))
    })
}

/// DEM over the cloud's footprint on a `gsd` grid anchored at multiples of
/// `gsd`.
fn bounding_dem(cloud: &[Point3], gsd: f64) -> Result<DemGrid, PipelineError> {
    if cloud.is_empty() {
        return Err(PipelineError::new("", "EmptyMap", "fused cloud is empty"));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in cloud {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let origin = ((x0 / gsd).floor() * gsd, (y0 / gsd).floor() * gsd);
    let width = ((x1 - origin.0) / gsd).floor() as usize + 1;
    let height = ((y1 - origin.1) / gsd).floor() as usize + 1;
    Ok(rasterize(cloud, origin, gsd, width, height)?)
}

/// Every stage from grouping to evaluation, in order. Stops at the first
/// failing stage; the report covers the stages completed so far.
pub fn cmd_run(ws: &Workspace, cfg: &RunConfig) -> Result<(RunReport, Vec<StageStatus>), PipelineError> {
    let steps: [fn(&Workspace, &RunConfig) -> Result<StageStatus, PipelineError>; 8] =
        [cmd_group, cmd_tile, cmd_match, cmd_sfm, cmd_dense, cmd_upgrade, cmd_fuse, cmd_eval];
    let mut statuses = Vec::new();
    for step in steps {
        match step(ws, cfg) {
            Ok(s) => {
                log::info!("{}: {} in {:.2} s", s.stage, if s.ran { "done" } else { "skipped" }, s.seconds);
                statuses.push(s);
            }
            Err(e) => {
                write_report(ws, cfg, &statuses)?;
                return Err(e);
            }
        }
    }
    let report = write_report(ws, cfg, &statuses)?;
    Ok((report, statuses))
}
