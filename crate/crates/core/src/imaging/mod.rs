//! Image ingest, acquisition-time grouping and overlapping tiling.

mod io;
mod raster;
mod tiling;

pub use io::{load_image, load_image_dir, read_pgm, write_meta, write_pgm16, write_pgm8, ImageMeta};
pub use raster::GrayImage;
pub use tiling::{
    build_tile_graph, crop_tiles, tile_positions, InterEdge, IntraEdge, PixelRect, Tile, TileGraph,
    TileInfo, TileManifest, TILE_MANIFEST_SCHEMA,
};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image {0} has no capture_time")]
    MissingMetadata(String),
    #[error("invalid tile size: {0}")]
    InvalidTileSize(String),
    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ImagingError {
    pub fn kind(&self) -> &'static str {
        match self {
            ImagingError::MissingMetadata(_) => "MissingMetadata",
            ImagingError::InvalidTileSize(_) => "InvalidTileSize",
            ImagingError::Format { .. } => "FormatError",
            ImagingError::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ImagingError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Grayscale source image. Intensities are stored on the 8-bit scale
/// regardless of the file bit depth.
#[derive(Debug, Clone)]
pub struct SourceImage {
    pub id: String,
    pub pixels: GrayImage,
    pub capture_time: Option<DateTime<Utc>>,
}

impl SourceImage {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGroup {
    pub group_id: String,
    pub image_ids: Vec<String>,
    pub time_span: (DateTime<Utc>, DateTime<Utc>),
}

/// Splits images, sorted by capture time (then id), wherever two consecutive
/// captures are at least `max_gap_days` apart. Groups are named `g0`, `g1`, ...
/// in order of their first capture.
pub fn group_by_time(
    images: &[(String, Option<DateTime<Utc>>)],
    max_gap_days: f64,
) -> Result<Vec<ImageGroup>, ImagingError> {
    let mut timed = Vec::with_capacity(images.len());
    for (id, time) in images {
        let time = time.ok_or_else(|| ImagingError::MissingMetadata(id.clone()))?;
        timed.push((time, id.clone()));
    }
    timed.sort();
    let gap_seconds = max_gap_days * 86_400.0;

    let mut groups: Vec<ImageGroup> = Vec::new();
    let mut prev: Option<DateTime<Utc>> = None;
    for (time, id) in timed {
        let split = match prev {
            None => true,
            Some(p) => (time - p).num_milliseconds() as f64 / 1000.0 >= gap_seconds,
        };
        if split {
            groups.push(ImageGroup {
                group_id: format!("g{}", groups.len()),
                image_ids: vec![id],
                time_span: (time, time),
            });
        } else {
            let g = groups.last_mut().expect("group opened on first image");
            g.image_ids.push(id);
            g.time_span.1 = time;
        }
        prev = Some(time);
    }
    Ok(groups)
}
