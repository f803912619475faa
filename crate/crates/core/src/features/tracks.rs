use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MatchTable;
use crate::geometry::Point2;
use crate::imaging::TileManifest;

/// Grid step (pixels) used to decide that two observations in one tile are
/// the same point.
pub const TRACK_QUANTUM: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub track_id: usize,
    /// Sorted by tile id, at most one per tile.
    pub observations: Vec<(String, Point2)>,
    pub images_touched: BTreeSet<String>,
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    /// Members of each set, each list ascending, lists ordered by their
    /// smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut order = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            by_root.entry(r).or_insert_with(|| {
                order.push(r);
                Vec::new()
            });
            by_root.get_mut(&r).unwrap().push(i);
        }
        order.into_iter().map(|r| by_root.remove(&r).unwrap()).collect()
    }
}

/// Observation nodes keyed by `(tile, quantized position)` plus the match
/// edges between them. Node indices follow the sorted key order, so the
/// graph does not depend on the order edges were supplied in.
#[derive(Debug, Clone)]
pub(crate) struct ObservationGraph {
    pub keys: Vec<(String, i64, i64)>,
    /// Representative coordinate: the smallest raw coordinate mapping to the key.
    pub coords: Vec<Point2>,
    /// Deduplicated, each `(lo, hi)` with `lo < hi`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl ObservationGraph {
    pub fn build<'a>(
        links: impl Iterator<Item = (&'a str, Point2, &'a str, Point2)> + Clone,
        quantum: f64,
    ) -> Self {
        let quant = |p: &Point2| ((p.x / quantum).round() as i64, (p.y / quantum).round() as i64);
        let mut rep: BTreeMap<(String, i64, i64), Point2> = BTreeMap::new();
        let mut note = |tile: &str, p: Point2| {
            let (qx, qy) = quant(&p);
            rep.entry((tile.to_string(), qx, qy))
                .and_modify(|q| {
                    if (p.x, p.y).partial_cmp(&(q.x, q.y)) == Some(std::cmp::Ordering::Less) {
                        *q = p;
                    }
                })
                .or_insert(p);
        };
        for (ta, pa, tb, pb) in links.clone() {
            note(ta, pa);
            note(tb, pb);
        }
        let index: BTreeMap<&(String, i64, i64), usize> =
            rep.keys().enumerate().map(|(i, k)| (k, i)).collect();
        let mut edges = BTreeSet::new();
        for (ta, pa, tb, pb) in links {
            let (ax, ay) = quant(&pa);
            let (bx, by) = quant(&pb);
            let i = index[&(ta.to_string(), ax, ay)];
            let j = index[&(tb.to_string(), bx, by)];
            if i != j {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        let keys: Vec<_> = rep.keys().cloned().collect();
        let coords = rep.values().copied().collect();
        Self {
            keys,
            coords,
            edges: edges.into_iter().collect(),
        }
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.keys.len());
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        uf.components()
    }

    /// Whether the nodes hit every tile at most once.
    pub fn one_per_tile(&self, nodes: &[usize]) -> bool {
        let mut seen = BTreeSet::new();
        nodes.iter().all(|&n| seen.insert(self.keys[n].0.as_str()))
    }
}

/// Chains pairwise matches into tracks (connected components of the match
/// graph). Components that hit a tile twice are inconsistent and dropped.
pub fn build_tracks(tables: &[MatchTable], manifest: &TileManifest) -> Vec<FeatureTrack> {
    let links = tables.iter().flat_map(|t| {
        t.matches
            .iter()
            .map(move |m| (t.tile_a.as_str(), m.a, t.tile_b.as_str(), m.b))
    });
    let graph = ObservationGraph::build(links, TRACK_QUANTUM);
    let tile_image = manifest.by_id();
    let mut tracks = Vec::new();
    for comp in graph.components() {
        if comp.len() < 2 || !graph.one_per_tile(&comp) {
            continue;
        }
        let observations: Vec<(String, Point2)> = comp
            .iter()
            .map(|&n| (graph.keys[n].0.clone(), graph.coords[n]))
            .collect();
        let images_touched = observations
            .iter()
            .map(|(t, _)| {
                tile_image
                    .get(t)
                    .map(|info| info.image_id.clone())
                    .unwrap_or_else(|| t.clone())
            })
            .collect();
        tracks.push(FeatureTrack {
            track_id: tracks.len(),
            observations,
            images_touched,
        });
    }
    tracks
}
