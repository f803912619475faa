use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SfmError;
use crate::features::MatchTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSelection {
    pub image_pair: (String, String),
    pub tile_pair: (String, String),
    pub image_pair_match_count: usize,
    pub tile_pair_match_count: usize,
}

/// Summed tile-level match counts per unordered image pair (ids sorted
/// within each key). Tables between tiles of one image, or touching tiles
/// outside `tile_images`, are ignored.
pub fn image_pair_counts(
    tables: &[MatchTable],
    tile_images: &BTreeMap<String, String>,
) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for t in tables {
        let (Some(ia), Some(ib)) = (tile_images.get(&t.tile_a), tile_images.get(&t.tile_b)) else {
            continue;
        };
        if ia == ib {
            continue;
        }
        let key = if ia < ib { (ia.clone(), ib.clone()) } else { (ib.clone(), ia.clone()) };
        *counts.entry(key).or_insert(0) += t.count();
    }
    counts
}

/// The image pair with the fewest matches among those with at least
/// `floor` matches; ties go to the lexicographically smaller pair.
pub fn select_initial_image_pair(
    counts: &BTreeMap<(String, String), usize>,
    floor: usize,
) -> Result<((String, String), usize), SfmError> {
    // BTreeMap iteration is already lexicographic, so the first minimum wins.
    let mut best: Option<(&(String, String), usize)> = None;
    for (pair, &n) in counts {
        if n < floor {
            continue;
        }
        if best.is_none_or(|(_, b)| n < b) {
            best = Some((pair, n));
        }
    }
    best.map(|(p, n)| (p.clone(), n)).ok_or_else(|| {
        SfmError::NoViablePair(format!("no image pair has at least {floor} matches"))
    })
}

/// The tile pair (first tile in `image_pair.0`, second in `image_pair.1`)
/// with the most matches; ties go to the smaller pair of ids.
pub fn select_initial_tile_pair(
    image_pair: &(String, String),
    tables: &[MatchTable],
    tile_images: &BTreeMap<String, String>,
) -> Result<((String, String), usize), SfmError> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for t in tables {
        let (Some(ia), Some(ib)) = (tile_images.get(&t.tile_a), tile_images.get(&t.tile_b)) else {
            continue;
        };
        let key = if (ia, ib) == (&image_pair.0, &image_pair.1) {
            (t.tile_a.clone(), t.tile_b.clone())
        } else if (ib, ia) == (&image_pair.0, &image_pair.1) {
            (t.tile_b.clone(), t.tile_a.clone())
        } else {
            continue;
        };
        *counts.entry(key).or_insert(0) += t.count();
    }
    let mut best: Option<(&(String, String), usize)> = None;
    for (pair, &n) in &counts {
        if n > 0 && best.is_none_or(|(_, b)| n > b) {
            best = Some((pair, n));
        }
    }
    best.map(|(p, n)| (p.clone(), n)).ok_or_else(|| {
        SfmError::NoViablePair(format!(
            "images {} and {} share no matched tiles",
            image_pair.0, image_pair.1
        ))
    })
}
