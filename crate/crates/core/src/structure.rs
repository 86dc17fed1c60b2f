//! Trunks, branches, depths and the left/right decomposition of spanning
//! trees on cylinders.
//!
//! A trunk is a simple path in the tree meeting every ring. Deleting the
//! trunk leaves a forest of hanging subtrees; a branch is a path from the
//! trunk down to a leaf of one of those subtrees, so there is one branch per
//! hanging leaf and its length is that leaf's depth.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CylinderGraph, EdgeId, EdgeKind, Graph};
use crate::sampler::SpanningTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrunkMode {
    /// The first loop-erased segment of a trunk-first Wilson run.
    ProofTrace,
    /// The tree path from `(0,0)` to `(0,m−1)`.
    Canonical,
    /// An `s`-rooted trunk on a sink graph.
    Sink,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trunk {
    pub vertices: Vec<usize>,
    pub mode: TrunkMode,
}

impl Trunk {
    /// Length in edges.
    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn meets_every_ring(&self, g: &CylinderGraph) -> bool {
        let mut seen = vec![false; g.m()];
        for &v in &self.vertices {
            if let Some(k) = g.ring_of(v) {
                seen[k] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn require_sink(g: &CylinderGraph, wanted: bool) -> Result<()> {
    if g.has_sink() == wanted {
        Ok(())
    } else {
        Err(Error::SinkMismatch(wanted))
    }
}

/// The tree path from `(0,0)` to `(0,m−1)`. Any path between the two end
/// rings crosses every ring in between, so this is always a trunk.
pub fn canonical_trunk(g: &CylinderGraph, t: &SpanningTree) -> Result<Trunk> {
    require_sink(g, false)?;
    Ok(Trunk {
        vertices: t.path(0, (g.m() - 1) * g.n()),
        mode: TrunkMode::Canonical,
    })
}

/// The first recorded loop-erased segment, oriented from the root. Only a
/// trunk when the tree was sampled in trunk-first order.
pub fn proof_trunk(g: &CylinderGraph, t: &SpanningTree) -> Result<Trunk> {
    let first = t
        .trace()
        .and_then(|segments| segments.first())
        .ok_or(Error::MissingTrace)?;
    let mut vertices = first.vertices.clone();
    vertices.reverse();
    let trunk = Trunk {
        vertices,
        mode: TrunkMode::ProofTrace,
    };
    if !trunk.meets_every_ring(g) {
        return Err(Error::NotATree(
            "first trace segment misses a ring; sample in trunk-first order".into(),
        ));
    }
    Ok(trunk)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Sink,
}

/// Side of every vertex: whether its tree path to the sink ends with an edge
/// to `R_0` (left) or to `R_{m−1}` (right).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    side: Vec<Side>,
}

impl Segments {
    pub fn side(&self, v: usize) -> Side {
        self.side[v]
    }

    pub fn left(&self) -> Vec<usize> {
        self.members(Side::Left)
    }

    pub fn right(&self) -> Vec<usize> {
        self.members(Side::Right)
    }

    fn members(&self, which: Side) -> Vec<usize> {
        (0..self.side.len())
            .filter(|&v| self.side[v] == which)
            .collect()
    }
}

pub fn lr_segments(g: &CylinderGraph, t: &SpanningTree) -> Result<Segments> {
    require_sink(g, true)?;
    let sink = g.sink().expect("sink graph");
    let (offsets, neighbours) = t.adjacency();
    let mut side = vec![Side::Sink; g.vertex_count()];
    let mut labelled = vec![false; g.vertex_count()];
    labelled[sink] = true;
    let mut stack = Vec::new();
    for inc in g.incident(sink) {
        if !t.contains_edge(inc.edge) {
            continue;
        }
        let label = match g.edge_kind(inc.edge)? {
            EdgeKind::SinkLeft => Side::Left,
            EdgeKind::SinkRight => Side::Right,
            kind => unreachable!("sink edge {} has kind {kind:?}", inc.edge),
        };
        let child = inc.to as usize;
        side[child] = label;
        labelled[child] = true;
        stack.push(child);
        while let Some(v) = stack.pop() {
            for &u in &neighbours[offsets[v] as usize..offsets[v + 1] as usize] {
                let u = u as usize;
                if !labelled[u] {
                    labelled[u] = true;
                    side[u] = label;
                    stack.push(u);
                }
            }
        }
    }
    debug_assert!(labelled.iter().all(|&l| l));
    Ok(Segments { side })
}

/// An `s`-rooted trunk and its class index.
///
/// Picks the left vertex `u` of largest ring and the right vertex `v` of
/// smallest ring (ties to the smaller index) and joins the tree paths
/// `u → s → v`. The class index is the ring of `u`, or −1 with no left side.
pub fn sink_trunk(g: &CylinderGraph, t: &SpanningTree) -> Result<(Trunk, i64)> {
    let segments = lr_segments(g, t)?;
    let sink = g.sink().expect("sink graph");
    let mut far_left: Option<usize> = None;
    let mut near_right: Option<usize> = None;
    for v in 0..g.cell_count() {
        let ring = g.ring_of(v);
        match segments.side(v) {
            Side::Left if far_left.is_none_or(|u| ring > g.ring_of(u)) => far_left = Some(v),
            Side::Right if near_right.is_none_or(|u| ring < g.ring_of(u)) => near_right = Some(v),
            _ => {}
        }
    }
    let mut vertices = match far_left {
        Some(u) => t.path(u, sink),
        None => vec![sink],
    };
    if let Some(v) = near_right {
        vertices.extend(t.path(sink, v).into_iter().skip(1));
    }
    let class = far_left.map_or(-1, |u| g.ring_of(u).unwrap() as i64);
    Ok((
        Trunk {
            vertices,
            mode: TrunkMode::Sink,
        },
        class,
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlashResult {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// Edges of the graph with one end on each side, sorted by id.
    pub edges: Vec<EdgeId>,
    pub size: usize,
}

pub fn lr_slash(g: &CylinderGraph, segments: &Segments) -> SlashResult {
    let edges: Vec<EdgeId> = g
        .edge_list()
        .into_iter()
        .filter(|&(_, a, b)| {
            matches!(
                (segments.side(a), segments.side(b)),
                (Side::Left, Side::Right) | (Side::Right, Side::Left)
            )
        })
        .map(|(e, _, _)| e)
        .collect();
    SlashResult {
        left: segments.left(),
        right: segments.right(),
        size: edges.len(),
        edges,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    /// The trunk vertex the branch leaves from.
    pub attach: usize,
    /// From `attach` to a hanging leaf.
    pub vertices: Vec<usize>,
    pub length: usize,
}

/// The forest left after deleting a trunk from a tree, with each vertex's
/// distance to the trunk.
#[derive(Clone, Debug)]
pub struct HangingForest {
    depth: Vec<u32>,
    toward_trunk: Vec<u32>,
    leaf: Vec<bool>,
}

impl HangingForest {
    pub fn new(t: &SpanningTree, trunk: &Trunk) -> Self {
        let n = t.vertex_count();
        let (offsets, neighbours) = t.adjacency();
        let mut depth = vec![u32::MAX; n];
        let mut toward_trunk = vec![u32::MAX; n];
        let mut queue = VecDeque::with_capacity(n);
        for &v in &trunk.vertices {
            depth[v] = 0;
            toward_trunk[v] = v as u32;
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            for &u in &neighbours[offsets[v] as usize..offsets[v + 1] as usize] {
                let u = u as usize;
                if depth[u] == u32::MAX {
                    depth[u] = depth[v] + 1;
                    toward_trunk[u] = v as u32;
                    queue.push_back(u);
                }
            }
        }
        let leaf = (0..n)
            .map(|v| depth[v] > 0 && offsets[v + 1] - offsets[v] == 1)
            .collect();
        HangingForest {
            depth,
            toward_trunk,
            leaf,
        }
    }

    /// Tree distance from each vertex to the trunk.
    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Off-trunk vertices with no further tree neighbours.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.leaf.len()).filter(|&v| self.leaf[v])
    }

    /// One length per branch, in order of the branch's leaf.
    pub fn branch_lengths(&self) -> Vec<u32> {
        self.leaves().map(|v| self.depth[v]).collect()
    }

    pub fn branches(&self) -> Vec<Branch> {
        self.leaves()
            .map(|leaf| {
                let mut vertices = vec![leaf];
                let mut v = leaf;
                while self.depth[v] > 0 {
                    v = self.toward_trunk[v] as usize;
                    vertices.push(v);
                }
                vertices.reverse();
                Branch {
                    attach: v,
                    length: vertices.len() - 1,
                    vertices,
                }
            })
            .collect()
    }
}

pub fn branches(t: &SpanningTree, trunk: &Trunk) -> Vec<Branch> {
    HangingForest::new(t, trunk).branches()
}

pub fn vertex_depths(t: &SpanningTree, trunk: &Trunk) -> Vec<u32> {
    HangingForest::new(t, trunk).depth
}
