use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GrayImage, ImagingError, SourceImage};

pub const TILE_MANIFEST_SCHEMA: u32 = 1;

/// Placement of a tile inside its source image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileInfo {
    pub tile_id: String,
    pub image_id: String,
    pub row_offset: usize,
    pub col_offset: usize,
    pub size: usize,
    pub grid_row: usize,
    pub grid_col: usize,
}

impl TileInfo {
    /// Whether the full-image pixel `(x, y)` falls inside this tile.
    pub fn contains_image_point(&self, x: f64, y: f64) -> bool {
        let (c0, r0) = (self.col_offset as f64, self.row_offset as f64);
        let last = (self.size - 1) as f64;
        x >= c0 && y >= r0 && x <= c0 + last && y <= r0 + last
    }

    pub fn image_to_tile(&self, x: f64, y: f64) -> (f64, f64) {
        (x - self.col_offset as f64, y - self.row_offset as f64)
    }

    pub fn tile_to_image(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.col_offset as f64, y + self.row_offset as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub info: TileInfo,
    pub pixels: GrayImage,
}

/// Offsets of a tiling along one axis of length `len`: multiples of
/// `2d/3`, plus a final tile flush with the far edge when needed for
/// coverage.
pub fn tile_positions(len: usize, d: usize) -> Vec<usize> {
    let stride = 2 * d / 3;
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        if p + d >= len {
            out.push(len - d);
            break;
        }
        out.push(p);
        p += stride;
    }
    out
}

/// Crops `image` into `d x d` tiles on a grid with stride `2d/3`, row-major.
/// Tile ids are `<image>_r<row>_c<col>`.
pub fn crop_tiles(image: &SourceImage, d: usize) -> Result<Vec<Tile>, ImagingError> {
    if d < 3 || !d.is_multiple_of(3) {
        return Err(ImagingError::InvalidTileSize(format!(
            "d = {d} must be a positive multiple of 3"
        )));
    }
    if image.width() < d || image.height() < d {
        return Err(ImagingError::InvalidTileSize(format!(
            "image {} is {}x{}, smaller than tile size {d}",
            image.id,
            image.width(),
            image.height()
        )));
    }
    let rows = tile_positions(image.height(), d);
    let cols = tile_positions(image.width(), d);
    let mut tiles = Vec::with_capacity(rows.len() * cols.len());
    for (gr, &r) in rows.iter().enumerate() {
        for (gc, &c) in cols.iter().enumerate() {
            tiles.push(Tile {
                info: TileInfo {
                    tile_id: format!("{}_r{gr}_c{gc}", image.id),
                    image_id: image.id.clone(),
                    row_offset: r,
                    col_offset: c,
                    size: d,
                    grid_row: gr,
                    grid_col: gc,
                },
                pixels: image.pixels.crop(c, r, d, d),
            });
        }
    }
    Ok(tiles)
}

/// Axis-aligned pixel rectangle in source-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraEdge {
    pub a: String,
    pub b: String,
    pub overlap: PixelRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterEdge {
    pub a: String,
    pub b: String,
    /// Shared footprint as a fraction of the tile area.
    pub overlap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TileGraph {
    pub nodes: Vec<String>,
    pub intra_edges: Vec<IntraEdge>,
    pub inter_edges: Vec<InterEdge>,
}

impl TileGraph {
    /// Every tile pair connected by an edge of either kind.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.intra_edges
            .iter()
            .map(|e| (e.a.clone(), e.b.clone()))
            .chain(self.inter_edges.iter().map(|e| (e.a.clone(), e.b.clone())))
            .collect()
    }
}

fn overlap_1d(a0: f64, b0: f64, len: f64) -> f64 {
    ((a0.min(b0) + len) - a0.max(b0)).max(0.0)
}

/// Builds the tile adjacency graph.
///
/// `tiles_by_image` is ordered; inter-image edges are emitted for each pair
/// of images in that order. A hint `(dx, dy)` for `(image_a, image_b)` states
/// that pixel `(x, y)` of `image_a` shows the same ground as `(x + dx, y + dy)`
/// of `image_b`; tiles are connected when their footprints, compared in a
/// common frame, share at least a quarter of the tile area. Without a hint,
/// tiles at the same grid position are connected.
pub fn build_tile_graph(
    tiles_by_image: &[(String, Vec<TileInfo>)],
    footprint_hint: &BTreeMap<(String, String), (f64, f64)>,
) -> TileGraph {
    let mut graph = TileGraph::default();
    for (_, tiles) in tiles_by_image {
        graph.nodes.extend(tiles.iter().map(|t| t.tile_id.clone()));
        let by_pos: BTreeMap<(usize, usize), &TileInfo> =
            tiles.iter().map(|t| ((t.grid_row, t.grid_col), t)).collect();
        for t in tiles {
            for (dr, dc) in [(0, 1), (1, 0)] {
                let Some(n) = by_pos.get(&(t.grid_row + dr, t.grid_col + dc)) else { continue };
                let row = n.row_offset.max(t.row_offset);
                let col = n.col_offset.max(t.col_offset);
                let row_end = (n.row_offset + n.size).min(t.row_offset + t.size);
                let col_end = (n.col_offset + n.size).min(t.col_offset + t.size);
                graph.intra_edges.push(IntraEdge {
                    a: t.tile_id.clone(),
                    b: n.tile_id.clone(),
                    overlap: PixelRect {
                        row,
                        col,
                        height: row_end.saturating_sub(row),
                        width: col_end.saturating_sub(col),
                    },
                });
            }
        }
    }

    for (i, (img_a, tiles_a)) in tiles_by_image.iter().enumerate() {
        for (img_b, tiles_b) in &tiles_by_image[i + 1..] {
            let hint = footprint_hint
                .get(&(img_a.clone(), img_b.clone()))
                .copied()
                .or_else(|| {
                    footprint_hint
                        .get(&(img_b.clone(), img_a.clone()))
                        .map(|&(dx, dy)| (-dx, -dy))
                });
            for ta in tiles_a {
                for tb in tiles_b {
                    match hint {
                        None => {
                            if ta.grid_row == tb.grid_row && ta.grid_col == tb.grid_col {
                                graph.inter_edges.push(InterEdge {
                                    a: ta.tile_id.clone(),
                                    b: tb.tile_id.clone(),
                                    overlap_fraction: 1.0,
                                });
                            }
                        }
                        Some((dx, dy)) => {
                            let d = ta.size as f64;
                            let w = overlap_1d(ta.col_offset as f64, tb.col_offset as f64 - dx, d);
                            let h = overlap_1d(ta.row_offset as f64, tb.row_offset as f64 - dy, d);
                            let frac = w * h / (d * d);
                            if frac >= 0.25 {
                                graph.inter_edges.push(InterEdge {
                                    a: ta.tile_id.clone(),
                                    b: tb.tile_id.clone(),
                                    overlap_fraction: frac,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    graph
}

/// JSON listing of every tile of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub schema_version: u32,
    pub tile_size: usize,
    pub tiles: Vec<TileInfo>,
}

impl TileManifest {
    pub fn new(tile_size: usize, tiles: Vec<TileInfo>) -> Self {
        Self {
            schema_version: TILE_MANIFEST_SCHEMA,
            tile_size,
            tiles,
        }
    }

    pub fn get(&self, tile_id: &str) -> Option<&TileInfo> {
        self.tiles.iter().find(|t| t.tile_id == tile_id)
    }

    pub fn by_id(&self) -> BTreeMap<String, TileInfo> {
        self.tiles.iter().map(|t| (t.tile_id.clone(), t.clone())).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ImagingError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| ImagingError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ImagingError> {
        let text = std::fs::read_to_string(path).map_err(|e| ImagingError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ImagingError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}
