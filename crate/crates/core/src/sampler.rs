//! Simple random walks, chronological loop erasure and Wilson's algorithm.
//!
//! Wilson's algorithm grows a tree from a root: each vertex not yet in the
//! tree launches a simple random walk that runs until it hits the tree, and
//! the loop erasure of that walk is grafted on. The result is exactly uniform
//! over all spanning trees, whatever root and vertex order are used.
//!
//! Loop erasure happens while walking: the current loop-erased path lives on
//! a stack with a position index per vertex, and revisiting a vertex
//! truncates the stack back to it. Memory is `O(|V|)` however long the walk.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{CylinderGraph, EdgeId, Graph, QuotientGraph, NO_EDGE};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

const NOT_ON_STACK: u32 = u32::MAX;

/// A reproducible random stream: ChaCha8 keyed by `seed`, with `stream`
/// selecting one of 2^64 independent streams (one per replica).
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Exactly uniform draw from `0..bound` (Lemire's multiply-and-reject).
#[inline]
pub fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: u32) -> u32 {
    debug_assert!(bound > 0);
    let mut product = u64::from(rng.next_u32()) * u64::from(bound);
    let mut low = product as u32;
    if low < bound {
        let threshold = bound.wrapping_neg() % bound;
        while low < threshold {
            product = u64::from(rng.next_u32()) * u64::from(bound);
            low = product as u32;
        }
    }
    (product >> 32) as u32
}

/// A walk from its start to the first vertex of the stopping set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkPath {
    pub vertices: Vec<usize>,
    /// `edges[k]` joins `vertices[k]` and `vertices[k + 1]`.
    pub edges: Vec<EdgeId>,
}

impl WalkPath {
    /// A walk over `vertices`, taking the first matching edge between each
    /// consecutive pair.
    pub fn from_vertices<G: Graph + ?Sized>(g: &G, vertices: Vec<usize>) -> Result<Self> {
        let mut edges = Vec::with_capacity(vertices.len().saturating_sub(1));
        for pair in vertices.windows(2) {
            if pair[0] >= g.vertex_count() {
                return Err(Error::VertexOutOfRange(pair[0]));
            }
            let inc = g
                .incident(pair[0])
                .iter()
                .find(|inc| inc.to as usize == pair[1])
                .ok_or_else(|| {
                    Error::Parse(format!("{} and {} are not adjacent", pair[0], pair[1]))
                })?;
            edges.push(inc.edge);
        }
        Ok(WalkPath { vertices, edges })
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// A simple path obtained by erasing the loops of a walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopErasedPath {
    pub vertices: Vec<usize>,
    pub edges: Vec<EdgeId>,
}

impl LoopErasedPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn as_walk(&self) -> WalkPath {
        WalkPath {
            vertices: self.vertices.clone(),
            edges: self.edges.clone(),
        }
    }
}

/// Runs a simple random walk from `start` until it first visits a vertex
/// satisfying `target`. Each step picks uniformly among the incidence slots
/// of the current vertex, so parallel edges and loops count with their
/// multiplicity.
pub fn walk_until_hit<G, R, F>(
    g: &G,
    start: usize,
    target: F,
    rng: &mut R,
    step_cap: u64,
) -> Result<WalkPath>
where
    G: Graph + ?Sized,
    R: RngCore + ?Sized,
    F: Fn(usize) -> bool,
{
    if start >= g.vertex_count() {
        return Err(Error::VertexOutOfRange(start));
    }
    let mut vertices = vec![start];
    let mut edges = Vec::new();
    let mut current = start;
    let mut steps = 0u64;
    while !target(current) {
        if steps == step_cap {
            return Err(Error::WalkCapExceeded {
                start,
                cap: step_cap,
            });
        }
        steps += 1;
        let slots = g.incident(current);
        let inc = slots[uniform_below(rng, slots.len() as u32) as usize];
        current = inc.to as usize;
        vertices.push(current);
        edges.push(inc.edge);
    }
    Ok(WalkPath { vertices, edges })
}

/// Chronological loop erasure: whenever the walk returns to a vertex already
/// on the path, the loop back to that vertex is deleted.
pub fn loop_erase(walk: &WalkPath) -> LoopErasedPath {
    let mut vertices: Vec<usize> = Vec::with_capacity(walk.vertices.len());
    let mut edges: Vec<EdgeId> = Vec::with_capacity(walk.edges.len());
    let mut position: HashMap<usize, usize> = HashMap::new();
    for (k, &v) in walk.vertices.iter().enumerate() {
        if let Some(&p) = position.get(&v) {
            for dropped in vertices.drain(p + 1..) {
                position.remove(&dropped);
            }
            edges.truncate(p);
        } else {
            if k > 0 {
                edges.push(walk.edges[k - 1]);
            }
            position.insert(v, vertices.len());
            vertices.push(v);
        }
    }
    LoopErasedPath { vertices, edges }
}

/// A spanning tree stored as parent links towards `root`.
#[derive(Clone, Debug)]
pub struct SpanningTree {
    root: usize,
    parent: Vec<u32>,
    parent_edge: Vec<EdgeId>,
    edges: Vec<EdgeId>,
    trace: Option<Vec<LoopErasedPath>>,
}

impl SpanningTree {
    fn from_parents(
        root: usize,
        parent: Vec<u32>,
        parent_edge: Vec<EdgeId>,
        trace: Option<Vec<LoopErasedPath>>,
    ) -> Self {
        let mut edges: Vec<EdgeId> = parent_edge
            .iter()
            .copied()
            .filter(|&e| e != NO_EDGE)
            .collect();
        edges.sort_unstable();
        SpanningTree {
            root,
            parent,
            parent_edge,
            edges,
            trace,
        }
    }

    /// Builds the tree with the given edge set, oriented towards `root`.
    pub fn from_edges<G: Graph + ?Sized>(g: &G, root: usize, edges: &[EdgeId]) -> Result<Self> {
        let n = g.vertex_count();
        if root >= n {
            return Err(Error::VertexOutOfRange(root));
        }
        if edges.len() + 1 != n {
            return Err(Error::NotATree(format!(
                "{} edges for {} vertices",
                edges.len(),
                n
            )));
        }
        let mut wanted: Vec<EdgeId> = edges.to_vec();
        wanted.sort_unstable();
        if wanted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::NotATree("repeated edge".into()));
        }
        let is_tree_edge = |e: EdgeId| wanted.binary_search(&e).is_ok();

        let mut parent = vec![u32::MAX; n];
        let mut parent_edge = vec![NO_EDGE; n];
        parent[root] = root as u32;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for inc in g.incident(v) {
                let u = inc.to as usize;
                if !is_tree_edge(inc.edge) || inc.edge == parent_edge[v] {
                    continue;
                }
                if parent[u] != u32::MAX {
                    return Err(Error::NotATree(format!("edge {} closes a cycle", inc.edge)));
                }
                parent[u] = v as u32;
                parent_edge[u] = inc.edge;
                reached += 1;
                queue.push_back(u);
            }
        }
        if reached != n {
            return Err(Error::NotATree(format!(
                "edges reach {reached} of {n} vertices"
            )));
        }
        Ok(SpanningTree {
            root,
            parent,
            parent_edge,
            edges: wanted,
            trace: None,
        })
    }

    /// Replaces the recorded sampling trace.
    pub fn with_recorded_trace(mut self, trace: Vec<LoopErasedPath>) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    /// Parent of `v`; the root is its own parent.
    #[inline]
    pub fn parent(&self, v: usize) -> usize {
        self.parent[v] as usize
    }

    /// Edge from `v` to its parent, `None` at the root.
    pub fn parent_edge(&self, v: usize) -> Option<EdgeId> {
        let e = self.parent_edge[v];
        (e != NO_EDGE).then_some(e)
    }

    /// Edge ids, sorted.
    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    /// Loop-erased segments in insertion order, if recorded.
    pub fn trace(&self) -> Option<&[LoopErasedPath]> {
        self.trace.as_deref()
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    /// Undirected tree adjacency in CSR form: `(offsets, neighbours)`.
    pub fn adjacency(&self) -> (Vec<u32>, Vec<u32>) {
        let n = self.parent.len();
        let mut degree = vec![0u32; n + 1];
        for v in 0..n {
            if v != self.root {
                degree[v] += 1;
                degree[self.parent[v] as usize] += 1;
            }
        }
        let mut offsets = vec![0u32; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut neighbours = vec![0u32; offsets[n] as usize];
        for v in 0..n {
            if v != self.root {
                let p = self.parent[v] as usize;
                neighbours[fill[v] as usize] = p as u32;
                fill[v] += 1;
                neighbours[fill[p] as usize] = v as u32;
                fill[p] += 1;
            }
        }
        (offsets, neighbours)
    }

    /// The unique tree path from `a` to `b`.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let n = self.parent.len();
        let mut mark = vec![u32::MAX; n];
        let mut up_a = vec![a];
        mark[a] = 0;
        let mut v = a;
        while v != self.root {
            v = self.parent(v);
            mark[v] = up_a.len() as u32;
            up_a.push(v);
        }
        let mut up_b = Vec::new();
        let mut v = b;
        while mark[v] == u32::MAX {
            up_b.push(v);
            v = self.parent(v);
        }
        let meet = mark[v] as usize;
        up_a.truncate(meet + 1);
        up_a.extend(up_b.into_iter().rev());
        up_a
    }

    /// Checks every structural invariant of a spanning tree of `g`.
    pub fn validate<G: Graph + ?Sized>(&self, g: &G) -> Result<()> {
        let n = g.vertex_count();
        if self.parent.len() != n || self.root >= n {
            return Err(Error::NotATree("vertex count mismatch".into()));
        }
        if self.edges.len() + 1 != n {
            return Err(Error::NotATree(format!("{} edges", self.edges.len())));
        }
        if self.parent[self.root] as usize != self.root || self.parent_edge[self.root] != NO_EDGE {
            return Err(Error::NotATree("root is not its own parent".into()));
        }
        for v in 0..n {
            if v == self.root {
                continue;
            }
            let p = self.parent[v] as usize;
            let e = self.parent_edge[v];
            let joins = g
                .incident(v)
                .iter()
                .any(|inc| inc.edge == e && inc.to as usize == p);
            if !joins || !self.contains_edge(e) {
                return Err(Error::NotATree(format!(
                    "parent edge of {v} does not join it to {p}"
                )));
            }
        }
        // 0 = unvisited, 1 = on current chain, 2 = reaches root
        let mut state = vec![0u8; n];
        state[self.root] = 2;
        let mut chain = Vec::new();
        for start in 0..n {
            let mut v = start;
            while state[v] == 0 {
                state[v] = 1;
                chain.push(v);
                v = self.parent[v] as usize;
            }
            if state[v] == 1 {
                return Err(Error::NotATree(format!("parent cycle through {v}")));
            }
            for u in chain.drain(..) {
                state[u] = 2;
            }
        }
        Ok(())
    }
}

/// Wilson's algorithm with its tuning knobs.
#[derive(Clone, Copy, Debug)]
pub struct Wilson {
    /// Steps allowed per walk before giving up with an error.
    pub step_cap: u64,
    /// Keep each loop-erased segment in the returned tree.
    pub record_trace: bool,
}

impl Default for Wilson {
    fn default() -> Self {
        Wilson {
            step_cap: DEFAULT_STEP_CAP,
            record_trace: false,
        }
    }
}

impl Wilson {
    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    /// Samples a uniform spanning tree of `g`. `order` must be a permutation
    /// of all vertices except `root`.
    pub fn sample<G, R>(
        &self,
        g: &G,
        root: usize,
        order: &[usize],
        rng: &mut R,
    ) -> Result<SpanningTree>
    where
        G: Graph + ?Sized,
        R: RngCore + ?Sized,
    {
        check_permutation(g.vertex_count(), root, order)?;
        let mut in_tree = vec![false; g.vertex_count()];
        in_tree[root] = true;
        let mut trace = self.record_trace.then(Vec::new);
        let (parent, parent_edge) = grow(
            g,
            root,
            order,
            &mut in_tree,
            rng,
            self.step_cap,
            trace.as_mut(),
        )?;
        Ok(SpanningTree::from_parents(root, parent, parent_edge, trace))
    }

    /// Completes the forest `partial` to a spanning tree distributed as the
    /// uniform spanning tree conditioned on containing `partial`.
    ///
    /// The forest is contracted, Wilson's algorithm runs on the quotient from
    /// the class of `root`, and the result is lifted back. `order` must list
    /// every vertex not touched by `partial`; classes it misses are visited
    /// afterwards in class order. Trace segments, if recorded, are sequences
    /// of class representatives.
    pub fn extend<G, R>(
        &self,
        g: &G,
        root: usize,
        partial: &[EdgeId],
        order: &[usize],
        rng: &mut R,
    ) -> Result<SpanningTree>
    where
        G: Graph + ?Sized,
        R: RngCore + ?Sized,
    {
        let n = g.vertex_count();
        if root >= n {
            return Err(Error::VertexOutOfRange(root));
        }
        let quotient = QuotientGraph::new(g, partial, true)?;
        let classes = quotient.class_count();

        let mut touched = vec![false; n];
        for (_, a, b) in g
            .edge_list()
            .into_iter()
            .filter(|(e, _, _)| quotient.forest().binary_search(e).is_ok())
        {
            touched[a] = true;
            touched[b] = true;
        }
        let mut listed = vec![false; n];
        for &v in order {
            if v >= n {
                return Err(Error::VertexOutOfRange(v));
            }
            listed[v] = true;
        }
        if let Some(v) = (0..n).find(|&v| !touched[v] && !listed[v] && v != root) {
            return Err(Error::InvalidOrder(format!("vertex {v} is missing")));
        }

        let root_class = quotient.class_of(root);
        let mut queued = vec![false; classes];
        queued[root_class] = true;
        let mut class_order = Vec::with_capacity(classes.saturating_sub(1));
        for c in order
            .iter()
            .map(|&v| quotient.class_of(v))
            .chain(0..classes)
        {
            if !queued[c] {
                queued[c] = true;
                class_order.push(c);
            }
        }

        let mut in_tree = vec![false; classes];
        in_tree[root_class] = true;
        let mut trace = self.record_trace.then(Vec::new);
        let (_, class_edges) = grow(
            &quotient,
            root_class,
            &class_order,
            &mut in_tree,
            rng,
            self.step_cap,
            trace.as_mut(),
        )?;

        let mut edges: Vec<EdgeId> = quotient.forest().to_vec();
        edges.extend(class_edges.into_iter().filter(|&e| e != NO_EDGE));
        let mut tree = SpanningTree::from_edges(g, root, &edges)?;
        if let Some(mut segments) = trace {
            for seg in &mut segments {
                for v in &mut seg.vertices {
                    *v = quotient.representative(*v);
                }
            }
            tree.trace = Some(segments);
        }
        Ok(tree)
    }
}

/// `Wilson::default().sample(..)`.
pub fn wilson<G, R>(g: &G, root: usize, order: &[usize], rng: &mut R) -> Result<SpanningTree>
where
    G: Graph + ?Sized,
    R: RngCore + ?Sized,
{
    Wilson::default().sample(g, root, order, rng)
}

/// `Wilson::default().extend(..)`.
pub fn wilson_extend<G, R>(
    g: &G,
    root: usize,
    partial: &[EdgeId],
    order: &[usize],
    rng: &mut R,
) -> Result<SpanningTree>
where
    G: Graph + ?Sized,
    R: RngCore + ?Sized,
{
    Wilson::default().extend(g, root, partial, order, rng)
}

fn check_permutation(n: usize, root: usize, order: &[usize]) -> Result<()> {
    if root >= n {
        return Err(Error::VertexOutOfRange(root));
    }
    if order.len() + 1 != n {
        return Err(Error::InvalidOrder(format!(
            "expected {} vertices, got {}",
            n - 1,
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    seen[root] = true;
    for &v in order {
        if v >= n {
            return Err(Error::VertexOutOfRange(v));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidOrder(format!(
                "vertex {v} repeated or is the root"
            )));
        }
    }
    Ok(())
}

/// The Wilson loop proper. Returns `(parent, parent_edge)` over the vertices
/// of `g`; vertices already in the tree on entry keep `parent = u32::MAX`
/// except `root`, which is its own parent.
fn grow<G, R>(
    g: &G,
    root: usize,
    order: &[usize],
    in_tree: &mut [bool],
    rng: &mut R,
    step_cap: u64,
    mut trace: Option<&mut Vec<LoopErasedPath>>,
) -> Result<(Vec<u32>, Vec<EdgeId>)>
where
    G: Graph + ?Sized,
    R: RngCore + ?Sized,
{
    let n = g.vertex_count();
    let mut parent = vec![u32::MAX; n];
    let mut parent_edge = vec![NO_EDGE; n];
    parent[root] = root as u32;

    let mut position = vec![NOT_ON_STACK; n];
    // (vertex, edge used to arrive)
    let mut stack: Vec<(u32, EdgeId)> = Vec::new();

    for &start in order {
        if in_tree[start] {
            continue;
        }
        stack.clear();
        stack.push((start as u32, NO_EDGE));
        position[start] = 0;
        let mut current = start;
        let mut steps = 0u64;
        while !in_tree[current] {
            if steps == step_cap {
                return Err(Error::WalkCapExceeded {
                    start,
                    cap: step_cap,
                });
            }
            steps += 1;
            let slots = g.incident(current);
            let inc = slots[uniform_below(rng, slots.len() as u32) as usize];
            let next = inc.to as usize;
            let p = position[next];
            if p != NOT_ON_STACK {
                for &(dropped, _) in &stack[p as usize + 1..] {
                    position[dropped as usize] = NOT_ON_STACK;
                }
                stack.truncate(p as usize + 1);
            } else {
                position[next] = stack.len() as u32;
                stack.push((next as u32, inc.edge));
            }
            current = next;
        }

        for k in 0..stack.len() - 1 {
            let v = stack[k].0 as usize;
            let (up, edge) = stack[k + 1];
            parent[v] = up;
            parent_edge[v] = edge;
            in_tree[v] = true;
        }
        for &(v, _) in &stack {
            position[v as usize] = NOT_ON_STACK;
        }
        if let Some(segments) = trace.as_mut() {
            segments.push(LoopErasedPath {
                vertices: stack.iter().map(|&(v, _)| v as usize).collect(),
                edges: stack[1..].iter().map(|&(_, e)| e).collect(),
            });
        }
    }
    Ok((parent, parent_edge))
}

/// Encoding order with `root` removed.
pub fn default_order(vertex_count: usize, root: usize) -> Vec<usize> {
    (0..vertex_count).filter(|&v| v != root).collect()
}

/// Named choices of root and vertex order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleOrder {
    /// Root `0` (or the sink) and the remaining vertices in encoding order.
    #[default]
    Default,
    /// Root at the last vertex and the rest in decreasing encoding order.
    Reversed,
    /// See [`trunk_first_order`].
    TrunkFirst,
}

impl SampleOrder {
    pub fn resolve(self, g: &CylinderGraph) -> (usize, Vec<usize>) {
        let count = g.vertex_count();
        match self {
            SampleOrder::Default => {
                let root = g.sink().unwrap_or(0);
                (root, default_order(count, root))
            }
            SampleOrder::Reversed => (count - 1, (0..count - 1).rev().collect()),
            SampleOrder::TrunkFirst => trunk_first_order(g),
        }
    }
}

/// Root and order whose first segment crosses the whole cylinder.
///
/// Without a sink the root is `(0,0)` and the first walk starts at
/// `(0,m−1)`, so the first loop-erased segment joins the two end rings and
/// meets every ring. For `m = 1` the first walk starts at `(1,0)`. With a
/// sink the root is the sink and the order is the encoding order.
pub fn trunk_first_order(g: &CylinderGraph) -> (usize, Vec<usize>) {
    if let Some(sink) = g.sink() {
        return (sink, default_order(g.vertex_count(), sink));
    }
    let root = 0;
    let first = if g.m() == 1 { 1 } else { (g.m() - 1) * g.n() };
    let mut order = Vec::with_capacity(g.vertex_count() - 1);
    order.push(first);
    order.extend((1..g.vertex_count()).filter(|&v| v != first));
    (root, order)
}
