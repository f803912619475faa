//! Sparse correspondences between tiles and their chaining into tracks.

mod detect;
mod matching;
mod tracks;

pub use detect::{detect_and_describe, harris_response, DetectorConfig, Feature, Keypoint};
pub use matching::{load_matches, match_tile_pairs, match_tiles, save_matches, MatchTable};
pub use tracks::{build_tracks, FeatureTrack, TRACK_QUANTUM};
pub(crate) use tracks::{ObservationGraph, UnionFind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: unknown tile {tile:?}")]
    UnknownTile { line: usize, tile: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FeatureError {
    pub fn kind(&self) -> &'static str {
        match self {
            FeatureError::ParseError { .. } => "ParseError",
            FeatureError::UnknownTile { .. } => "UnknownTile",
            FeatureError::Io { .. } => "IoError",
        }
    }
}
