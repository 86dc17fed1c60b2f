//! Exact ground truth for small instances: spanning-tree counts from the
//! Matrix-Tree theorem, exhaustive tree enumeration, and Pearson chi-square
//! tests of sampled tree frequencies.

use std::collections::HashMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph};

/// Plain edge-list multigraph; each edge carries a label (for graphs built
/// from a [`Graph`], the edge id).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Multigraph {
    vertex_count: usize,
    edges: Vec<(usize, usize, EdgeId)>,
}

impl Multigraph {
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Self {
        Multigraph {
            vertex_count,
            edges: edges
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| (a, b, k as EdgeId))
                .collect(),
        }
    }

    pub fn from_graph<G: Graph + ?Sized>(g: &G) -> Self {
        Multigraph {
            vertex_count: g.vertex_count(),
            edges: g
                .edge_list()
                .into_iter()
                .map(|(e, a, b)| (a, b, e))
                .collect(),
        }
    }

    /// The path graph on `k` vertices.
    pub fn path(k: usize) -> Self {
        let edges: Vec<_> = (1..k).map(|v| (v - 1, v)).collect();
        Multigraph::new(k, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `(u, v, label)` triples.
    pub fn edges(&self) -> &[(usize, usize, EdgeId)] {
        &self.edges
    }

    /// `G − e` for the edge at position `k`.
    pub fn delete_edge(&self, k: usize) -> Self {
        let mut edges = self.edges.clone();
        edges.remove(k);
        Multigraph {
            vertex_count: self.vertex_count,
            edges,
        }
    }

    /// `G / e` for the edge at position `k`: its endpoints merge, the edge
    /// itself disappears and any parallel copies become loops.
    pub fn contract_edge(&self, k: usize) -> Self {
        let (a, b, _) = self.edges[k];
        let (keep, gone) = (a.min(b), a.max(b));
        let relabel = |v: usize| match v {
            _ if v == gone => keep,
            _ if v > gone => v - 1,
            _ => v,
        };
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &(u, v, label))| (relabel(u), relabel(v), label))
            .collect();
        Multigraph {
            vertex_count: self.vertex_count - usize::from(a != b),
            edges,
        }
    }
}

/// Number of spanning trees, exact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeCount(pub BigUint);

impl TreeCount {
    pub fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }
}

impl fmt::Display for TreeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Matrix-Tree theorem: the determinant of the Laplacian with the last row
/// and column removed. Loops are ignored, parallel edges add up. Returns 0
/// for a disconnected graph.
pub fn spanning_tree_count(g: &Multigraph) -> TreeCount {
    let n = g.vertex_count;
    if n <= 1 {
        return TreeCount(BigUint::from(u8::from(n == 1)));
    }
    let size = n - 1;
    let mut laplacian = vec![vec![0i64; size]; size];
    for &(a, b, _) in &g.edges {
        if a == b {
            continue;
        }
        for (x, y) in [(a, b), (b, a)] {
            if x < size {
                laplacian[x][x] += 1;
                if y < size {
                    laplacian[x][y] -= 1;
                }
            }
        }
    }
    let matrix = laplacian
        .into_iter()
        .map(|row| row.into_iter().map(BigInt::from).collect())
        .collect();
    let det = bareiss_determinant(matrix);
    debug_assert!(!det.is_negative());
    TreeCount(det.magnitude().clone())
}

/// Fraction-free Gaussian elimination. Every division is exact.
pub fn bareiss_determinant(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut negate = false;
    let mut previous = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(k, i);
                    negate = !negate;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let value = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &previous;
                a[i][j] = value;
            }
        }
        previous = a[k][k].clone();
    }
    let det = a[n - 1][n - 1].clone();
    if negate {
        -det
    } else {
        det
    }
}

struct Components {
    label: Vec<usize>,
    count: usize,
}

impl Components {
    fn new(n: usize) -> Self {
        Components {
            label: (0..n).collect(),
            count: n,
        }
    }

    fn root(&mut self, mut x: usize) -> usize {
        while self.label[x] != x {
            self.label[x] = self.label[self.label[x]];
            x = self.label[x];
        }
        x
    }

    fn join(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.root(a), self.root(b));
        if ra == rb {
            return false;
        }
        self.label[rb] = ra;
        self.count -= 1;
        true
    }
}

/// Every spanning tree of `g` as a sorted list of edge labels; the list is
/// sorted lexicographically. Fails before enumerating if the Matrix-Tree
/// count exceeds `cap`.
///
/// Edges are decided in order: edge `k` is either contracted into the tree
/// (when it joins two components) or deleted, and a branch is abandoned as
/// soon as the undecided edges can no longer connect the graph.
pub fn enumerate_spanning_trees(g: &Multigraph, cap: u64) -> Result<Vec<Vec<EdgeId>>> {
    let count = spanning_tree_count(g);
    if count.to_u64().is_none_or(|c| c > cap) {
        return Err(Error::EnumerationCap {
            count: count.to_string(),
            cap,
        });
    }
    let mut trees = Vec::with_capacity(count.to_u64().unwrap_or(0) as usize);
    if g.vertex_count == 0 {
        return Ok(trees);
    }
    let mut chosen = Vec::with_capacity(g.vertex_count - 1);
    let labels: Vec<usize> = (0..g.vertex_count).collect();
    descend(g, 0, labels, g.vertex_count, &mut chosen, &mut trees);
    for tree in &mut trees {
        tree.sort_unstable();
    }
    trees.sort();
    debug_assert_eq!(trees.len() as u64, count.to_u64().unwrap());
    Ok(trees)
}

fn descend(
    g: &Multigraph,
    k: usize,
    labels: Vec<usize>,
    components: usize,
    chosen: &mut Vec<EdgeId>,
    out: &mut Vec<Vec<EdgeId>>,
) {
    if components == 1 {
        out.push(chosen.clone());
        return;
    }
    if k == g.edges.len() {
        return;
    }
    let mut reach = Components::new(g.vertex_count);
    for (v, &label) in labels.iter().enumerate() {
        reach.join(v, label);
    }
    for &(a, b, _) in &g.edges[k..] {
        reach.join(a, b);
    }
    if reach.count > 1 {
        return;
    }

    let (a, b, label) = g.edges[k];
    let (la, lb) = (labels[a], labels[b]);
    if la != lb {
        let merged = labels
            .iter()
            .map(|&l| if l == lb { la } else { l })
            .collect();
        chosen.push(label);
        descend(g, k + 1, merged, components - 1, chosen, out);
        chosen.pop();
    }
    descend(g, k + 1, labels, components, chosen, out);
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Smallest expected count per cell for the chi-square approximation.
pub const MIN_EXPECTED: f64 = 5.0;

/// Upper tail of the chi-square distribution via the regularized upper
/// incomplete gamma function.
pub fn chi_square_p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}

/// Pearson goodness of fit of `observed` against `expected` counts.
pub fn chi_square_counts(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    assert_eq!(observed.len(), expected.len());
    if let Some(&low) = expected.iter().find(|&&e| e < MIN_EXPECTED) {
        return Err(Error::Undersampled {
            expected: low,
            minimum: MIN_EXPECTED,
        });
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let dof = observed.len().saturating_sub(1);
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: chi_square_p_value(statistic, dof),
    })
}

/// Counts how often each universe member occurs among `samples`.
pub fn tally<S: AsRef<[EdgeId]>>(samples: &[S], universe: &[Vec<EdgeId>]) -> Result<Vec<u64>> {
    let index: HashMap<&[EdgeId], usize> = universe
        .iter()
        .enumerate()
        .map(|(k, t)| (t.as_slice(), k))
        .collect();
    let mut counts = vec![0u64; universe.len()];
    for (k, sample) in samples.iter().enumerate() {
        let cell = index
            .get(sample.as_ref())
            .ok_or(Error::SampleOutsideUniverse(k))?;
        counts[*cell] += 1;
    }
    Ok(counts)
}

/// Tests whether `samples` are uniform over `universe`.
pub fn chi_square_uniformity<S: AsRef<[EdgeId]>>(
    samples: &[S],
    universe: &[Vec<EdgeId>],
) -> Result<ChiSquare> {
    let counts = tally(samples, universe)?;
    let expected = vec![samples.len() as f64 / universe.len() as f64; universe.len()];
    chi_square_counts(&counts, &expected)
}

/// Two-sample test that `a` and `b` are counts from the same distribution
/// (chi-square test of homogeneity on a 2 × k table).
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquare> {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut statistic = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let column = (x + y) as f64;
        for (observed, row) in [(x as f64, na), (y as f64, nb)] {
            let expected = row * column / total;
            if expected < MIN_EXPECTED {
                return Err(Error::Undersampled {
                    expected,
                    minimum: MIN_EXPECTED,
                });
            }
            statistic += (observed - expected).powi(2) / expected;
        }
    }
    let dof = a.len().saturating_sub(1);
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: chi_square_p_value(statistic, dof),
    })
}
