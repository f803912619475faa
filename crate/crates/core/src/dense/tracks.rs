use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{ObservationGraph, UnionFind};
use crate::geometry::{Correspondence2D2D, Point2};
use crate::imaging::GrayImage;

/// Grid step (pixels) for merging dense observations in one tile.
pub const DENSE_TRACK_QUANTUM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotoConsistencyConfig {
    /// Largest allowed standard deviation of a track's intensities, on the
    /// 8-bit gray scale.
    pub max_intensity_std: f64,
    pub min_track_len: usize,
}

impl Default for PhotoConsistencyConfig {
    fn default() -> Self {
        Self {
            max_intensity_std: 12.0,
            min_track_len: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTrack {
    pub track_id: usize,
    /// Sorted by tile id, one per tile.
    pub observations: Vec<(String, Point2)>,
    /// Tile intensity at each observation.
    pub intensities: Vec<f64>,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Splits `nodes` (connected through `edges`) until every piece passes the
/// intensity gate, cutting the edge with the largest intensity gap first.
fn split_component(
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    intensity: &[f64],
    max_std: f64,
    out: &mut Vec<Vec<usize>>,
) {
    let values: Vec<f64> = nodes.iter().map(|&n| intensity[n]).collect();
    if nodes.len() < 2 || std_dev(&values) <= max_std || edges.is_empty() {
        out.push(nodes);
        return;
    }
    let gap = |&(a, b): &(usize, usize)| (intensity[a] - intensity[b]).abs();
    // Largest gap; among equal gaps the first edge in sorted order.
    let mut worst = 0;
    for (k, e) in edges.iter().enumerate() {
        if gap(e) > gap(&edges[worst]) {
            worst = k;
        }
    }
    let mut rest = edges;
    rest.remove(worst);
    let local: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut uf = UnionFind::new(nodes.len());
    for &(a, b) in &rest {
        uf.union(local[&a], local[&b]);
    }
    let parts = uf.components();
    if parts.len() == 1 {
        // A cycle: the cut did not disconnect anything yet.
        split_component(nodes, rest, intensity, max_std, out);
        return;
    }
    for part in parts {
        let members: Vec<usize> = part.iter().map(|&i| nodes[i]).collect();
        let part_edges = rest
            .iter()
            .filter(|(a, _)| part.contains(&local[a]))
            .copied()
            .collect();
        split_component(members, part_edges, intensity, max_std, out);
    }
}

/// Chains dense correspondences `(tile_a, tile_b, matches)` into tracks.
///
/// Observations are merged on a 0.5 px grid per tile and linked
/// transitively. Components whose sampled intensities spread more than
/// `max_intensity_std` are split at their weakest link (largest intensity
/// gap between matched observations) until every piece passes. Pieces that
/// visit a tile twice or are shorter than `min_track_len` are dropped.
pub fn build_dense_tracks(
    pairs: &[(String, String, Vec<Correspondence2D2D>)],
    tiles: &BTreeMap<String, GrayImage>,
    cfg: &PhotoConsistencyConfig,
) -> Vec<DenseTrack> {
    let links = pairs.iter().flat_map(|(ta, tb, corrs)| {
        corrs.iter().map(move |c| (ta.as_str(), c.a, tb.as_str(), c.b))
    });
    let graph = ObservationGraph::build(links, DENSE_TRACK_QUANTUM);
    let intensity: Vec<f64> = graph
        .keys
        .iter()
        .zip(&graph.coords)
        .map(|((tile, _, _), p)| {
            tiles
                .get(tile)
                .and_then(|img| img.sample(p.x, p.y))
                .map(f64::from)
                .unwrap_or(f64::NAN)
        })
        .collect();

    let components = graph.components();
    let mut comp_of = vec![0; graph.keys.len()];
    for (k, comp) in components.iter().enumerate() {
        for &n in comp {
            comp_of[n] = k;
        }
    }
    let mut comp_edges = vec![Vec::new(); components.len()];
    for &(a, b) in &graph.edges {
        comp_edges[comp_of[a]].push((a, b));
    }

    let mut pieces = Vec::new();
    for (comp, edges) in components.into_iter().zip(comp_edges) {
        if comp.len() < cfg.min_track_len.max(2) {
            continue;
        }
        split_component(comp, edges, &intensity, cfg.max_intensity_std, &mut pieces);
    }
    let mut tracks: Vec<DenseTrack> = pieces
        .into_iter()
        .filter(|p| p.len() >= cfg.min_track_len.max(2) && graph.one_per_tile(p))
        .filter(|p| p.iter().all(|&n| intensity[n].is_finite()))
        .map(|mut p| {
            p.sort_unstable();
            DenseTrack {
                track_id: 0,
                observations: p.iter().map(|&n| (graph.keys[n].0.clone(), graph.coords[n])).collect(),
                intensities: p.iter().map(|&n| intensity[n]).collect(),
            }
        })
        .collect();
    // Node order follows the sorted keys, so ordering by the first
    // observation's key gives a schedule-independent numbering.
    tracks.sort_by(|a, b| {
        let ka = (&a.observations[0].0, a.observations[0].1.y, a.observations[0].1.x);
        let kb = (&b.observations[0].0, b.observations[0].1.y, b.observations[0].1.x);
        ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
    });
    for (k, t) in tracks.iter_mut().enumerate() {
        t.track_id = k;
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiles(values: &[(&str, f32)]) -> BTreeMap<String, GrayImage> {
        values.iter().map(|(id, v)| (id.to_string(), GrayImage::filled(20, 20, *v))).collect()
    }

    fn link(a: &str, b: &str, pa: (f64, f64), pb: (f64, f64)) -> (String, String, Vec<Correspondence2D2D>) {
        (
            a.into(),
            b.into(),
            vec![Correspondence2D2D::new(Point2::new(pa.0, pa.1), Point2::new(pb.0, pb.1))],
        )
    }

    #[test]
    fn consistent_three_view_track_kept() {
        let t = tiles(&[("A", 100.0), ("B", 100.0), ("C", 100.0)]);
        let pairs = vec![link("A", "B", (1.0, 1.0), (2.0, 2.0)), link("B", "C", (2.0, 2.0), (3.0, 3.0))];
        let tracks = build_dense_tracks(&pairs, &t, &PhotoConsistencyConfig::default());
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations.len(), 3);
        assert_eq!(tracks[0].intensities, vec![100.0; 3]);
    }

    #[test]
    fn single_bright_observation_cut() {
        // Chain A - B - C - D where D is 100 gray levels brighter.
        let t = tiles(&[("A", 100.0), ("B", 102.0), ("C", 99.0), ("D", 200.0)]);
        let pairs = vec![
            link("A", "B", (1.0, 1.0), (2.0, 2.0)),
            link("B", "C", (2.0, 2.0), (3.0, 3.0)),
            link("C", "D", (3.0, 3.0), (4.0, 4.0)),
        ];
        let tracks = build_dense_tracks(&pairs, &t, &PhotoConsistencyConfig::default());
        assert_eq!(tracks.len(), 1);
        let ids: Vec<&str> = tracks[0].observations.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(ids, vec!["A", "B", "C"]);
    }

    #[test]
    fn cycle_needs_two_cuts() {
        // Triangle A - B - D - A with D off; both D links must go.
        let t = tiles(&[("A", 100.0), ("B", 101.0), ("D", 220.0)]);
        let pairs = vec![
            link("A", "B", (1.0, 1.0), (2.0, 2.0)),
            link("B", "D", (2.0, 2.0), (4.0, 4.0)),
            link("A", "D", (1.0, 1.0), (4.0, 4.0)),
        ];
        let tracks = build_dense_tracks(&pairs, &t, &PhotoConsistencyConfig::default());
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations.len(), 2);
    }

    #[test]
    fn inactive_gate_equals_transitive_closure() {
        let t = tiles(&[("A", 50.0), ("B", 55.0), ("C", 52.0), ("D", 51.0)]);
        let pairs = vec![
            link("A", "B", (1.0, 1.0), (2.0, 2.0)),
            link("B", "C", (2.0, 2.0), (3.0, 3.0)),
            link("C", "D", (5.0, 5.0), (6.0, 6.0)),
        ];
        let gated = build_dense_tracks(&pairs, &t, &PhotoConsistencyConfig::default());
        let open = build_dense_tracks(
            &pairs,
            &t,
            &PhotoConsistencyConfig {
                max_intensity_std: f64::INFINITY,
                min_track_len: 2,
            },
        );
        assert_eq!(gated, open);
        assert_eq!(gated.len(), 2);
    }

    #[test]
    fn half_pixel_quantization() {
        let t = tiles(&[("A", 9.0), ("B", 9.0), ("C", 9.0)]);
        let pairs = vec![link("A", "B", (1.0, 1.0), (2.0, 2.0)), link("B", "C", (2.2, 1.9), (3.0, 3.0))];
        let tracks = build_dense_tracks(&pairs, &t, &PhotoConsistencyConfig::default());
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations.len(), 3);
    }
}
