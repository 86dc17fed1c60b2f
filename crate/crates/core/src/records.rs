//! JSON-lines records for sampled trees.
//!
//! One line per tree:
//!
//! ```text
//! {"n":3,"m":2,"sink":false,"root":0,"edges":[[0,1],[0,2],...],"edge_ids":[0,2,...],"trace":[[5,2,0],...]}
//! ```
//!
//! `edges` lists the endpoints of each tree edge in vertex encoding. When
//! `m = 1` with a sink the two sink edges of a cell join the same pair, so
//! `edge_ids` carries the exact ids; a reader falls back to `edges` when
//! the ids are absent. `trace` holds the vertex sequence of each loop-erased
//! segment in the order Wilson's algorithm produced them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CylinderGraph, EdgeId, Graph};
use crate::sampler::{LoopErasedPath, SpanningTree};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub n: usize,
    pub m: usize,
    pub sink: bool,
    pub root: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_ids: Option<Vec<EdgeId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Vec<usize>>>,
}

impl TreeRecord {
    pub fn from_tree(g: &CylinderGraph, t: &SpanningTree) -> Self {
        let edges = t
            .edges()
            .iter()
            .map(|&e| {
                let (a, b) = g.endpoints(e).expect("tree edge of g");
                [a, b]
            })
            .collect();
        TreeRecord {
            n: g.n(),
            m: g.m(),
            sink: g.has_sink(),
            root: t.root(),
            edges,
            edge_ids: Some(t.edges().to_vec()),
            trace: t
                .trace()
                .map(|segments| segments.iter().map(|s| s.vertices.clone()).collect()),
        }
    }

    pub fn graph(&self) -> Result<CylinderGraph> {
        CylinderGraph::build(self.n, self.m, self.sink)
    }

    /// Rebuilds the tree on `g`, which must match the record's dimensions.
    pub fn to_tree(&self, g: &CylinderGraph) -> Result<SpanningTree> {
        if (g.n(), g.m(), g.has_sink()) != (self.n, self.m, self.sink) {
            return Err(Error::Parse(format!(
                "record is for n={} m={} sink={}",
                self.n, self.m, self.sink
            )));
        }
        let ids = match &self.edge_ids {
            Some(ids) => ids.clone(),
            None => self
                .edges
                .iter()
                .map(|&[a, b]| {
                    if a.max(b) >= g.vertex_count() {
                        return Err(Error::VertexOutOfRange(a.max(b)));
                    }
                    g.edge_between(a, b)
                        .ok_or_else(|| Error::Parse(format!("no edge between {a} and {b}")))
                })
                .collect::<Result<_>>()?,
        };
        let tree = SpanningTree::from_edges(g, self.root, &ids)?;
        let Some(trace) = &self.trace else {
            return Ok(tree);
        };
        let segments = trace
            .iter()
            .map(|vertices| {
                let edges = vertices
                    .windows(2)
                    .map(|w| tree_edge_between(g, &tree, w[0], w[1]))
                    .collect::<Result<_>>()?;
                Ok(LoopErasedPath {
                    vertices: vertices.clone(),
                    edges,
                })
            })
            .collect::<Result<_>>()?;
        Ok(tree.with_recorded_trace(segments))
    }
}

fn tree_edge_between(g: &CylinderGraph, t: &SpanningTree, a: usize, b: usize) -> Result<EdgeId> {
    if a >= g.vertex_count() {
        return Err(Error::VertexOutOfRange(a));
    }
    g.incident(a)
        .iter()
        .find(|inc| inc.to as usize == b && t.contains_edge(inc.edge))
        .map(|inc| inc.edge)
        .ok_or_else(|| Error::Parse(format!("trace step {a}-{b} is not a tree edge")))
}

pub fn write_tree_records<W: Write>(mut out: W, records: &[TreeRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads one record per non-blank line.
pub fn read_tree_records<R: BufRead>(input: R) -> Result<Vec<TreeRecord>> {
    let mut records = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?,
        );
    }
    Ok(records)
}
