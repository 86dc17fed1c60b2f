//! The cylinder `C_n × P_m`, its wired variant with a sink, and forest
//! contraction.
//!
//! Vertices are densely encoded: cell `(i, j)` has index `j·n + i` and the
//! sink, when present, has index `n·m`. Every edge carries a stable id:
//!
//! | ids                         | edges                                   |
//! |-----------------------------|-----------------------------------------|
//! | `j·n + i`                   | ring edge `(i, j) – (i+1 mod n, j)`     |
//! | `n·m + j·n + i`             | path edge `(i, j) – (i, j+1)`           |
//! | `n·m + n·(m−1) + i`         | sink edge `s – (i, 0)`                  |
//! | `n·m + n·(m−1) + n + i`     | sink edge `s – (i, m−1)`                |
//!
//! The sink is joined to `R_0` and to `R_{m−1}` by separate edges, so for
//! `m = 1` every cell has two parallel edges to the sink and every cell of a
//! sink graph has degree 4.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EdgeId = u32;

/// Sentinel for "no edge", used for the root's parent edge.
pub const NO_EDGE: EdgeId = EdgeId::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertex {
    Cell { i: usize, j: usize },
    Sink,
}

impl Vertex {
    pub fn cell(i: usize, j: usize) -> Self {
        Vertex::Cell { i, j }
    }

    /// Ring index `j` of a cell; `None` for the sink.
    pub fn ring(&self) -> Option<usize> {
        match *self {
            Vertex::Cell { j, .. } => Some(j),
            Vertex::Sink => None,
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Cell { i, j } => write!(f, "({i},{j})"),
            Vertex::Sink => f.write_str("s"),
        }
    }
}

/// One slot of an adjacency list: the neighbour and the edge leading to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub to: u32,
    pub edge: EdgeId,
}

/// Read-only multigraph access shared by the cylinder and its quotients.
///
/// A self-loop appears twice in its vertex's incidence list, once per
/// endpoint, so it contributes 2 to the degree.
pub trait Graph: Sync {
    fn vertex_count(&self) -> usize;

    fn incident(&self, v: usize) -> &[Incidence];

    fn degree(&self, v: usize) -> usize {
        self.incident(v).len()
    }

    /// All edges as `(id, u, v)`, sorted by id.
    fn edge_list(&self) -> Vec<(EdgeId, usize, usize)>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Ring,
    Path,
    /// Sink edge to `R_0`.
    SinkLeft,
    /// Sink edge to `R_{m−1}`.
    SinkRight,
}

#[derive(Clone, Debug)]
pub struct CylinderGraph {
    n: usize,
    m: usize,
    has_sink: bool,
    endpoints: Vec<[u32; 2]>,
    offsets: Vec<u32>,
    adjacency: Vec<Incidence>,
}

impl CylinderGraph {
    /// Builds `G_{n,m}` or, with `with_sink`, `G^s_{n,m}`.
    ///
    /// Neighbour lists are ordered ring-successor, ring-predecessor,
    /// path-right, path-left, sink; the sink lists `R_0` then `R_{m−1}`.
    pub fn build(n: usize, m: usize, with_sink: bool) -> Result<Self> {
        if n < 3 || m < 1 {
            return Err(Error::InvalidDimensions { n, m });
        }
        let cells = n * m;
        let vertex_count = cells + usize::from(with_sink);
        let ring_edges = n * m;
        let path_edges = n * (m - 1);
        let sink_base = ring_edges + path_edges;
        let edge_count = sink_base + if with_sink { 2 * n } else { 0 };
        if edge_count >= NO_EDGE as usize {
            return Err(Error::InvalidDimensions { n, m });
        }
        let sink = cells as u32;
        let idx = |i: usize, j: usize| (j * n + i) as u32;

        let mut endpoints = Vec::with_capacity(edge_count);
        for j in 0..m {
            for i in 0..n {
                endpoints.push(ordered(idx(i, j), idx((i + 1) % n, j)));
            }
        }
        for j in 0..m.saturating_sub(1) {
            for i in 0..n {
                endpoints.push(ordered(idx(i, j), idx(i, j + 1)));
            }
        }
        if with_sink {
            for i in 0..n {
                endpoints.push(ordered(idx(i, 0), sink));
            }
            for i in 0..n {
                endpoints.push(ordered(idx(i, m - 1), sink));
            }
        }
        debug_assert_eq!(endpoints.len(), edge_count);

        let mut offsets = Vec::with_capacity(vertex_count + 1);
        let mut adjacency = Vec::with_capacity(2 * edge_count);
        offsets.push(0);
        for j in 0..m {
            for i in 0..n {
                let prev = (i + n - 1) % n;
                adjacency.push(Incidence {
                    to: idx((i + 1) % n, j),
                    edge: (j * n + i) as EdgeId,
                });
                adjacency.push(Incidence {
                    to: idx(prev, j),
                    edge: (j * n + prev) as EdgeId,
                });
                if j + 1 < m {
                    adjacency.push(Incidence {
                        to: idx(i, j + 1),
                        edge: (ring_edges + j * n + i) as EdgeId,
                    });
                }
                if j > 0 {
                    adjacency.push(Incidence {
                        to: idx(i, j - 1),
                        edge: (ring_edges + (j - 1) * n + i) as EdgeId,
                    });
                }
                if with_sink && j == 0 {
                    adjacency.push(Incidence {
                        to: sink,
                        edge: (sink_base + i) as EdgeId,
                    });
                }
                if with_sink && j == m - 1 {
                    adjacency.push(Incidence {
                        to: sink,
                        edge: (sink_base + n + i) as EdgeId,
                    });
                }
                offsets.push(adjacency.len() as u32);
            }
        }
        if with_sink {
            for i in 0..n {
                adjacency.push(Incidence {
                    to: idx(i, 0),
                    edge: (sink_base + i) as EdgeId,
                });
            }
            for i in 0..n {
                adjacency.push(Incidence {
                    to: idx(i, m - 1),
                    edge: (sink_base + n + i) as EdgeId,
                });
            }
            offsets.push(adjacency.len() as u32);
        }

        Ok(CylinderGraph {
            n,
            m,
            has_sink: with_sink,
            endpoints,
            offsets,
            adjacency,
        })
    }

    /// Circumference.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Length (number of rings).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn has_sink(&self) -> bool {
        self.has_sink
    }

    pub fn cell_count(&self) -> usize {
        self.n * self.m
    }

    pub fn edge_count(&self) -> usize {
        self.endpoints.len()
    }

    /// Index of the sink, if there is one.
    pub fn sink(&self) -> Option<usize> {
        self.has_sink.then_some(self.n * self.m)
    }

    pub fn index(&self, v: Vertex) -> Result<usize> {
        match v {
            Vertex::Cell { i, j } if i < self.n && j < self.m => Ok(j * self.n + i),
            Vertex::Sink if self.has_sink => Ok(self.n * self.m),
            _ => Err(Error::UnknownVertex(v)),
        }
    }

    pub fn vertex(&self, index: usize) -> Result<Vertex> {
        let cells = self.n * self.m;
        if index < cells {
            Ok(Vertex::cell(index % self.n, index / self.n))
        } else if self.has_sink && index == cells {
            Ok(Vertex::Sink)
        } else {
            Err(Error::VertexOutOfRange(index))
        }
    }

    /// Ring index of the vertex at `index`; `None` for the sink or an
    /// out-of-range index.
    #[inline]
    pub fn ring_of(&self, index: usize) -> Option<usize> {
        (index < self.n * self.m).then(|| index / self.n)
    }

    /// The cells of ring `R_k`, in order of `i`.
    pub fn ring_vertices(&self, k: usize) -> std::ops::Range<usize> {
        let k = k.min(self.m);
        k * self.n..(k + 1).min(self.m) * self.n
    }

    pub fn neighbors(&self, v: Vertex) -> Result<Vec<Vertex>> {
        let index = self.index(v)?;
        self.incident(index)
            .iter()
            .map(|inc| self.vertex(inc.to as usize))
            .collect()
    }

    pub fn endpoints(&self, e: EdgeId) -> Result<(usize, usize)> {
        self.endpoints
            .get(e as usize)
            .map(|&[a, b]| (a as usize, b as usize))
            .ok_or(Error::EdgeOutOfRange(e))
    }

    pub fn edge_kind(&self, e: EdgeId) -> Result<EdgeKind> {
        let e = e as usize;
        let ring = self.n * self.m;
        let path = ring + self.n * (self.m - 1);
        Ok(match e {
            _ if e < ring => EdgeKind::Ring,
            _ if e < path => EdgeKind::Path,
            _ if e < self.endpoints.len() && e < path + self.n => EdgeKind::SinkLeft,
            _ if e < self.endpoints.len() => EdgeKind::SinkRight,
            _ => return Err(Error::EdgeOutOfRange(e as EdgeId)),
        })
    }

    /// Vertex count per degree.
    pub fn degree_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for v in 0..self.vertex_count() {
            *hist.entry(self.degree(v)).or_insert(0) += 1;
        }
        hist
    }

    /// Looks up the edge joining `u` and `v`; with parallel edges the
    /// smallest id wins.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<EdgeId> {
        if u >= self.vertex_count() {
            return None;
        }
        self.incident(u)
            .iter()
            .filter(|inc| inc.to as usize == v)
            .map(|inc| inc.edge)
            .min()
    }

    /// Contracts `forest` with self-loops retained.
    pub fn contract(&self, forest: &[EdgeId]) -> Result<QuotientGraph> {
        QuotientGraph::new(self, forest, true)
    }
}

impl Graph for CylinderGraph {
    #[inline]
    fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    fn incident(&self, v: usize) -> &[Incidence] {
        &self.adjacency[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    fn edge_list(&self) -> Vec<(EdgeId, usize, usize)> {
        self.endpoints
            .iter()
            .enumerate()
            .map(|(e, &[a, b])| (e as EdgeId, a as usize, b as usize))
            .collect()
    }
}

fn ordered(a: u32, b: u32) -> [u32; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// `G/A`: the base graph with every component of a forest `A` collapsed to a
/// single vertex.
///
/// Class ids are assigned in increasing order of each class's smallest
/// member, so the contraction of the empty forest is the base graph with
/// identical vertex ids and neighbour order. Edges keep their base ids.
/// Forest edges disappear; any other edge with both ends in one class becomes
/// a self-loop, which is kept (adding 2 to the degree) unless `keep_loops` is
/// false.
#[derive(Clone, Debug)]
pub struct QuotientGraph {
    class_of: Vec<u32>,
    representatives: Vec<usize>,
    forest: Vec<EdgeId>,
    keep_loops: bool,
    offsets: Vec<u32>,
    adjacency: Vec<Incidence>,
}

impl QuotientGraph {
    pub fn new<G: Graph + ?Sized>(base: &G, forest: &[EdgeId], keep_loops: bool) -> Result<Self> {
        let n = base.vertex_count();
        let edges = base.edge_list();
        let endpoint = |e: EdgeId| -> Result<(usize, usize)> {
            edges
                .binary_search_by_key(&e, |&(id, _, _)| id)
                .map(|k| (edges[k].1, edges[k].2))
                .map_err(|_| Error::EdgeOutOfRange(e))
        };

        let mut sets = DisjointSets::new(n);
        let mut in_forest = std::collections::HashSet::with_capacity(forest.len());
        for &e in forest {
            let (a, b) = endpoint(e)?;
            if !in_forest.insert(e) || !sets.union(a, b) {
                return Err(Error::CyclicForest(e));
            }
        }

        let mut class_of = vec![u32::MAX; n];
        let mut root_class = vec![u32::MAX; n];
        let mut representatives = Vec::new();
        for (v, class) in class_of.iter_mut().enumerate() {
            let r = sets.find(v);
            if root_class[r] == u32::MAX {
                root_class[r] = representatives.len() as u32;
                representatives.push(v);
            }
            *class = root_class[r];
        }

        let mut lists: Vec<Vec<Incidence>> = vec![Vec::new(); representatives.len()];
        for v in 0..n {
            let cv = class_of[v];
            for inc in base.incident(v) {
                if in_forest.contains(&inc.edge) {
                    continue;
                }
                let cu = class_of[inc.to as usize];
                if cu == cv && !keep_loops {
                    continue;
                }
                lists[cv as usize].push(Incidence {
                    to: cu,
                    edge: inc.edge,
                });
            }
        }
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0u32);
        let mut adjacency = Vec::new();
        for list in lists {
            adjacency.extend(list);
            offsets.push(adjacency.len() as u32);
        }

        let mut forest = forest.to_vec();
        forest.sort_unstable();
        Ok(QuotientGraph {
            class_of,
            representatives,
            forest,
            keep_loops,
            offsets,
            adjacency,
        })
    }

    pub fn class_count(&self) -> usize {
        self.representatives.len()
    }

    /// Class of base vertex `v`.
    pub fn class_of(&self, v: usize) -> usize {
        self.class_of[v] as usize
    }

    /// Smallest base vertex of class `c`.
    pub fn representative(&self, c: usize) -> usize {
        self.representatives[c]
    }

    /// The contracted forest, sorted by edge id.
    pub fn forest(&self) -> &[EdgeId] {
        &self.forest
    }

    pub fn keeps_loops(&self) -> bool {
        self.keep_loops
    }

    pub fn base_vertex_count(&self) -> usize {
        self.class_of.len()
    }

    /// Number of incident edges of class `c` leading to a different class.
    pub fn non_loop_degree(&self, c: usize) -> usize {
        self.incident(c)
            .iter()
            .filter(|inc| inc.to as usize != c)
            .count()
    }
}

impl Graph for QuotientGraph {
    #[inline]
    fn vertex_count(&self) -> usize {
        self.representatives.len()
    }

    #[inline]
    fn incident(&self, v: usize) -> &[Incidence] {
        &self.adjacency[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    fn edge_list(&self) -> Vec<(EdgeId, usize, usize)> {
        let mut edges = Vec::with_capacity(self.adjacency.len() / 2);
        for c in 0..self.vertex_count() {
            for inc in self.incident(c) {
                let to = inc.to as usize;
                if to > c {
                    edges.push((inc.edge, c, to));
                } else if to == c {
                    // loops are listed twice in the incidence list
                    edges.push((inc.edge, c, c));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handshake<G: Graph>(g: &G) -> bool {
        let degree_sum: usize = (0..g.vertex_count()).map(|v| g.degree(v)).sum();
        degree_sum == 2 * g.edge_list().len()
    }

    #[test]
    fn counts_match_definition() {
        let g = CylinderGraph::build(4, 5, false).unwrap();
        assert_eq!(g.vertex_count(), 20);
        assert_eq!(g.edge_count(), 36);

        let g = CylinderGraph::build(4, 6, true).unwrap();
        assert_eq!(g.vertex_count(), 25);
        assert_eq!(g.edge_count(), 52);

        let g = CylinderGraph::build(3, 1, false).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(matches!(
            CylinderGraph::build(2, 5, false),
            Err(Error::InvalidDimensions { n: 2, m: 5 })
        ));
        assert!(CylinderGraph::build(4, 0, true).is_err());
    }

    #[test]
    fn neighbour_order_and_degrees() {
        let g = CylinderGraph::build(4, 5, false).unwrap();
        assert_eq!(g.neighbors(Vertex::cell(0, 2)).unwrap().len(), 4);
        assert_eq!(
            g.neighbors(Vertex::cell(0, 2)).unwrap(),
            vec![
                Vertex::cell(1, 2),
                Vertex::cell(3, 2),
                Vertex::cell(0, 3),
                Vertex::cell(0, 1)
            ]
        );
        assert_eq!(g.neighbors(Vertex::cell(0, 0)).unwrap().len(), 3);
        assert!(g.neighbors(Vertex::Sink).is_err());
        assert!(g.neighbors(Vertex::cell(4, 0)).is_err());

        let g = CylinderGraph::build(4, 6, true).unwrap();
        assert_eq!(g.neighbors(Vertex::Sink).unwrap().len(), 8);
        assert_eq!(
            g.neighbors(Vertex::cell(2, 0)).unwrap().last(),
            Some(&Vertex::Sink)
        );
    }

    #[test]
    fn single_ring_sink_has_parallel_edges() {
        let g = CylinderGraph::build(3, 1, true).unwrap();
        assert_eq!(g.edge_count(), 3 + 6);
        for v in 0..3 {
            assert_eq!(g.degree(v), 4);
        }
        assert_eq!(g.degree(3), 6);
        assert!(handshake(&g));
    }

    #[test]
    fn ring_index() {
        assert_eq!(Vertex::cell(2, 7).ring(), Some(7));
        assert_eq!(Vertex::Sink.ring(), None);
        assert_eq!(Vertex::cell(0, 0).ring(), Some(0));
    }

    #[test]
    fn encoding_is_bijective() {
        for &(n, m, sink) in &[(3, 1, false), (4, 5, true), (5, 3, false)] {
            let g = CylinderGraph::build(n, m, sink).unwrap();
            for idx in 0..g.vertex_count() {
                let v = g.vertex(idx).unwrap();
                assert_eq!(g.index(v).unwrap(), idx);
            }
            assert!(g.vertex(g.vertex_count()).is_err());
        }
    }

    #[test]
    fn edge_ids_follow_layout() {
        let g = CylinderGraph::build(4, 3, true).unwrap();
        assert_eq!(g.endpoints(0).unwrap(), (0, 1));
        assert_eq!(g.endpoints(3).unwrap(), (0, 3));
        assert_eq!(g.edge_kind(11).unwrap(), EdgeKind::Ring);
        assert_eq!(g.endpoints(12).unwrap(), (0, 4));
        assert_eq!(g.edge_kind(19).unwrap(), EdgeKind::Path);
        assert_eq!(g.edge_kind(20).unwrap(), EdgeKind::SinkLeft);
        assert_eq!(g.endpoints(24).unwrap(), (8, 12));
        assert_eq!(g.edge_kind(27).unwrap(), EdgeKind::SinkRight);
        assert!(g.edge_kind(28).is_err());
        for (e, a, b) in g.edge_list() {
            assert!(g
                .incident(a)
                .iter()
                .any(|inc| inc.edge == e && inc.to as usize == b));
            assert!(g
                .incident(b)
                .iter()
                .any(|inc| inc.edge == e && inc.to as usize == a));
        }
    }

    #[test]
    fn handshake_holds() {
        for n in 3..7 {
            for m in 1..6 {
                for sink in [false, true] {
                    let g = CylinderGraph::build(n, m, sink).unwrap();
                    assert!(handshake(&g), "n={n} m={m} sink={sink}");
                }
            }
        }
    }

    #[test]
    fn removing_a_ring_separates_the_ends() {
        let g = CylinderGraph::build(4, 7, false).unwrap();
        for k in 1..6 {
            let mut seen = vec![false; g.vertex_count()];
            for v in g.ring_vertices(k) {
                seen[v] = true;
            }
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for inc in g.incident(v) {
                    let u = inc.to as usize;
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            let beyond = g.ring_vertices(k + 1).start;
            assert!(!seen[beyond..].contains(&true), "ring {k} does not separate");
        }
    }

    #[test]
    fn empty_contraction_is_identity() {
        let g = CylinderGraph::build(3, 4, true).unwrap();
        let q = g.contract(&[]).unwrap();
        assert_eq!(q.class_count(), g.vertex_count());
        for v in 0..g.vertex_count() {
            assert_eq!(q.class_of(v), v);
            assert_eq!(q.incident(v), g.incident(v));
        }
        assert_eq!(q.edge_list(), g.edge_list());
    }

    #[test]
    fn contracting_one_edge() {
        let g = CylinderGraph::build(3, 2, false).unwrap();
        let e = g.edge_between(0, 3).unwrap();
        let q = g.contract(&[e]).unwrap();
        assert_eq!(q.class_count(), 5);
        assert_eq!(q.class_of(3), q.class_of(0));
        assert_eq!(q.representative(q.class_of(3)), 0);
        assert!(handshake(&q));
    }

    #[test]
    fn contracting_a_spanning_tree() {
        let g = CylinderGraph::build(3, 2, false).unwrap();
        // ring 0 path, ring 1 path, one rung
        let tree = [0, 1, 3, 4, 6];
        let q = g.contract(&tree).unwrap();
        assert_eq!(q.class_count(), 1);
        assert_eq!(q.non_loop_degree(0), 0);
        assert_eq!(q.degree(0), 2 * (g.edge_count() - tree.len()));

        let dropped = QuotientGraph::new(&g, &tree, false).unwrap();
        assert_eq!(dropped.degree(0), 0);
    }

    #[test]
    fn quotient_degree_bookkeeping() {
        let g = CylinderGraph::build(4, 3, true).unwrap();
        let forest = [0, 1, 12, 20];
        let with = g.contract(&forest).unwrap();
        let without = QuotientGraph::new(&g, &forest, false).unwrap();
        assert_eq!(with.class_count() + forest.len(), g.vertex_count());
        for c in 0..with.class_count() {
            let members: Vec<usize> = (0..g.vertex_count())
                .filter(|&v| with.class_of(v) == c)
                .collect();
            let base_degree: usize = members.iter().map(|&v| g.degree(v)).sum();
            let internal = g
                .edge_list()
                .iter()
                .filter(|&&(_, a, b)| with.class_of(a) == c && with.class_of(b) == c)
                .count();
            let internal_forest = forest
                .iter()
                .filter(|&&e| with.class_of(g.endpoints(e).unwrap().0) == c)
                .count();
            assert_eq!(without.degree(c), base_degree - 2 * internal);
            assert_eq!(with.degree(c), base_degree - 2 * internal_forest);
        }
        assert!(handshake(&with));
        assert!(handshake(&without));
    }

    #[test]
    fn cyclic_forest_rejected() {
        let g = CylinderGraph::build(3, 2, false).unwrap();
        assert!(matches!(
            g.contract(&[0, 1, 2]),
            Err(Error::CyclicForest(2))
        ));
        assert!(matches!(g.contract(&[0, 0]), Err(Error::CyclicForest(0))));
        assert!(matches!(g.contract(&[99]), Err(Error::EdgeOutOfRange(99))));
    }
}
