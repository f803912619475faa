use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{detect_and_describe, DetectorConfig, Feature, FeatureError};
use crate::geometry::{Correspondence2D2D, Point2};
use crate::imaging::{Tile, TileManifest};

/// Matches between one ordered tile pair, in tile-local pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub tile_a: String,
    pub tile_b: String,
    pub matches: Vec<Correspondence2D2D>,
}

impl MatchTable {
    pub fn count(&self) -> usize {
        self.matches.len()
    }

    pub fn swapped(&self) -> Self {
        Self {
            tile_a: self.tile_b.clone(),
            tile_b: self.tile_a.clone(),
            matches: self.matches.iter().map(|c| c.swapped()).collect(),
        }
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each query: (best index, best distance, second-best distance).
fn nearest_two(queries: &[Feature], train: &[Feature]) -> Vec<(usize, f32, f32)> {
    queries
        .par_iter()
        .map(|q| {
            let mut best = (usize::MAX, f32::INFINITY);
            let mut second = f32::INFINITY;
            for (j, t) in train.iter().enumerate() {
                let d = sq_dist(&q.descriptor, &t.descriptor);
                if d < best.1 {
                    second = best.1;
                    best = (j, d);
                } else if d < second {
                    second = d;
                }
            }
            (best.0, best.1.sqrt(), second.sqrt())
        })
        .collect()
}

/// Index pairs of mutual nearest neighbours that pass the distance-ratio
/// test in both directions. Sorted by the index in `a`.
pub fn match_tiles(a: &[Feature], b: &[Feature], ratio: f32) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let ab = nearest_two(a, b);
    let ba = nearest_two(b, a);
    let passes = |(_, d1, d2): (usize, f32, f32)| d1 < ratio * d2;
    ab.iter()
        .enumerate()
        .filter(|&(i, &(j, _, _))| {
            j != usize::MAX && ba[j].0 == i && passes(ab[i]) && passes(ba[j])
        })
        .map(|(i, &(j, _, _))| (i, j))
        .collect()
}

/// Detects features on every tile and matches the requested pairs.
pub fn match_tile_pairs(
    tiles: &[Tile],
    pairs: &[(String, String)],
    detector: &DetectorConfig,
    ratio: f32,
) -> Vec<MatchTable> {
    let features: BTreeMap<&str, Vec<Feature>> = tiles
        .par_iter()
        .map(|t| (t.info.tile_id.as_str(), detect_and_describe(&t.pixels, detector)))
        .collect();
    let mut tables: Vec<MatchTable> = pairs
        .par_iter()
        .filter_map(|(a, b)| {
            let fa = features.get(a.as_str())?;
            let fb = features.get(b.as_str())?;
            let matches: Vec<Correspondence2D2D> = match_tiles(fa, fb, ratio)
                .into_iter()
                .map(|(i, j)| {
                    Correspondence2D2D::new(fa[i].keypoint.position, fb[j].keypoint.position)
                })
                .collect();
            (!matches.is_empty()).then(|| MatchTable {
                tile_a: a.clone(),
                tile_b: b.clone(),
                matches,
            })
        })
        .collect();
    tables.sort_by(|x, y| (&x.tile_a, &x.tile_b).cmp(&(&y.tile_a, &y.tile_b)));
    tables
}

const HEADER: &str = "tile_a,tile_b,xa,ya,xb,yb";

/// Writes tables as match CSV. Coordinates use the shortest representation
/// that parses back to the same `f64`.
pub fn save_matches(path: &Path, tables: &[MatchTable]) -> Result<(), FeatureError> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for t in tables {
        for m in &t.matches {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.tile_a, t.tile_b, m.a.x, m.a.y, m.b.x, m.b.y
            ));
        }
    }
    fs::write(path, out).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a match CSV, validating tile ids against `manifest`. Rows are
/// grouped into one table per ordered tile pair, in order of first
/// appearance.
pub fn load_matches(path: &Path, manifest: &TileManifest) -> Result<Vec<MatchTable>, FeatureError> {
    let text = fs::read_to_string(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let known: BTreeSet<&str> = manifest.tiles.iter().map(|t| t.tile_id.as_str()).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| FeatureError::ParseError {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != HEADER.split(',').collect::<Vec<_>>() {
        return Err(FeatureError::ParseError {
            line: 1,
            message: format!("expected header {HEADER:?}"),
        });
    }

    let mut order: Vec<(String, String)> = Vec::new();
    let mut grouped: BTreeMap<(String, String), Vec<Correspondence2D2D>> = BTreeMap::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| FeatureError::ParseError {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 6 {
            return Err(FeatureError::ParseError {
                line,
                message: format!("expected 6 fields, found {}", rec.len()),
            });
        }
        for tile in [&rec[0], &rec[1]] {
            if !known.contains(tile) {
                return Err(FeatureError::UnknownTile {
                    line,
                    tile: tile.to_string(),
                });
            }
        }
        let mut v = [0.0; 4];
        for (slot, field) in v.iter_mut().zip(rec.iter().skip(2)) {
            *slot = field.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                FeatureError::ParseError {
                    line,
                    message: format!("bad coordinate {field:?}"),
                }
            })?;
        }
        let key = (rec[0].to_string(), rec[1].to_string());
        let entry = grouped.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        entry.push(Correspondence2D2D::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3])));
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let matches = grouped.remove(&key).unwrap_or_default();
            MatchTable {
                tile_a: key.0,
                tile_b: key.1,
                matches,
            }
        })
        .collect())
}
