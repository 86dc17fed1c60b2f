//! Abelian sandpile on the sink graph: toppling, the burning test for
//! recurrence and avalanche statistics.
//!
//! Every cell of a sink graph has degree 4, so a cell is stable while its
//! height is at most 3. Grains sent to the sink are lost.

use std::collections::VecDeque;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CylinderGraph, Graph};
use crate::sampler::uniform_below;

/// Heights of the cells, indexed like the graph's cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeightConfig {
    heights: Vec<u32>,
}

impl HeightConfig {
    pub fn zeros(g: &CylinderGraph) -> Self {
        HeightConfig {
            heights: vec![0; g.cell_count()],
        }
    }

    pub fn from_heights(g: &CylinderGraph, heights: Vec<u32>) -> Result<Self> {
        if heights.len() != g.cell_count() {
            return Err(Error::ConfigSize {
                found: heights.len(),
                expected: g.cell_count(),
            });
        }
        Ok(HeightConfig { heights })
    }

    pub fn heights(&self) -> &[u32] {
        &self.heights
    }

    pub fn height(&self, cell: usize) -> u32 {
        self.heights[cell]
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn is_stable(&self, g: &CylinderGraph) -> bool {
        self.heights
            .iter()
            .enumerate()
            .all(|(v, &h)| (h as usize) < g.degree(v))
    }

    /// Base-4 index of a stable configuration, cell 0 least significant.
    pub fn index(&self) -> u64 {
        self.heights
            .iter()
            .rev()
            .fold(0u64, |acc, &h| acc * 4 + u64::from(h))
    }
}

fn require_sink(g: &CylinderGraph) -> Result<()> {
    if g.has_sink() {
        Ok(())
    } else {
        Err(Error::SinkMismatch(true))
    }
}

/// Every cell one grain short of toppling.
pub fn max_stable(g: &CylinderGraph) -> Result<HeightConfig> {
    require_sink(g)?;
    Ok(HeightConfig {
        heights: (0..g.cell_count())
            .map(|v| g.degree(v) as u32 - 1)
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvalancheRecord {
    pub topplings: u64,
    pub distinct_sites: u64,
    pub site: usize,
}

/// Which unstable cell topples next.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ToppleOrder {
    #[default]
    Fifo,
    Lifo,
}

/// A height configuration together with reusable scratch space for
/// stabilisation.
#[derive(Clone, Debug)]
pub struct Sandpile<'g> {
    graph: &'g CylinderGraph,
    config: HeightConfig,
    order: ToppleOrder,
    pending: VecDeque<u32>,
    queued: Vec<bool>,
    toppled: Vec<bool>,
    touched: Vec<u32>,
}

impl<'g> Sandpile<'g> {
    pub fn new(graph: &'g CylinderGraph, config: HeightConfig) -> Result<Self> {
        require_sink(graph)?;
        if config.len() != graph.cell_count() {
            return Err(Error::ConfigSize {
                found: config.len(),
                expected: graph.cell_count(),
            });
        }
        let cells = graph.cell_count();
        Ok(Sandpile {
            graph,
            config,
            order: ToppleOrder::Fifo,
            pending: VecDeque::new(),
            queued: vec![false; cells],
            toppled: vec![false; cells],
            touched: Vec::new(),
        })
    }

    pub fn with_order(mut self, order: ToppleOrder) -> Self {
        self.order = order;
        self
    }

    pub fn config(&self) -> &HeightConfig {
        &self.config
    }

    pub fn into_config(self) -> HeightConfig {
        self.config
    }

    /// Drops one grain on `site` and topples until stable.
    pub fn add_grain(&mut self, site: usize) -> AvalancheRecord {
        let g = self.graph;
        let cells = g.cell_count();
        assert!(site < cells, "site {site} is not a cell");
        self.config.heights[site] += 1;
        let mut topplings = 0u64;
        if self.config.heights[site] as usize >= g.degree(site) {
            self.pending.push_back(site as u32);
            self.queued[site] = true;
        }
        while let Some(v) = match self.order {
            ToppleOrder::Fifo => self.pending.pop_front(),
            ToppleOrder::Lifo => self.pending.pop_back(),
        } {
            let v = v as usize;
            self.queued[v] = false;
            let deg = g.degree(v) as u32;
            if self.config.heights[v] < deg {
                continue;
            }
            self.config.heights[v] -= deg;
            topplings += 1;
            if !self.toppled[v] {
                self.toppled[v] = true;
                self.touched.push(v as u32);
            }
            if self.config.heights[v] >= deg {
                self.pending.push_back(v as u32);
                self.queued[v] = true;
            }
            for inc in g.incident(v) {
                let w = inc.to as usize;
                if w >= cells {
                    continue;
                }
                self.config.heights[w] += 1;
                if !self.queued[w] && self.config.heights[w] as usize >= g.degree(w) {
                    self.pending.push_back(w as u32);
                    self.queued[w] = true;
                }
            }
        }
        let distinct_sites = self.touched.len() as u64;
        for &v in &self.touched {
            self.toppled[v as usize] = false;
        }
        self.touched.clear();
        AvalancheRecord {
            topplings,
            distinct_sites,
            site,
        }
    }
}

/// Adds a grain at `site` to the stable configuration `c` and stabilises
/// with FIFO toppling order.
pub fn add_and_stabilize(
    g: &CylinderGraph,
    c: &HeightConfig,
    site: usize,
) -> Result<(HeightConfig, AvalancheRecord)> {
    if site >= g.cell_count() {
        return Err(Error::VertexOutOfRange(site));
    }
    let mut pile = Sandpile::new(g, c.clone())?;
    let record = pile.add_grain(site);
    Ok((pile.into_config(), record))
}

/// Burning test: starting from the sink, a cell burns once its height
/// reaches the number of edges to unburnt neighbours. The configuration is
/// recurrent iff every cell burns.
pub fn is_recurrent(g: &CylinderGraph, c: &HeightConfig) -> Result<bool> {
    require_sink(g)?;
    let cells = g.cell_count();
    if c.len() != cells {
        return Err(Error::ConfigSize {
            found: c.len(),
            expected: cells,
        });
    }
    let mut unburnt: Vec<u32> = (0..cells)
        .map(|v| {
            g.incident(v)
                .iter()
                .filter(|inc| (inc.to as usize) < cells)
                .count() as u32
        })
        .collect();
    let mut burnt = vec![false; cells];
    let mut ready: Vec<usize> = (0..cells).filter(|&v| c.heights[v] >= unburnt[v]).collect();
    for &v in &ready {
        burnt[v] = true;
    }
    let mut count = 0;
    while let Some(v) = ready.pop() {
        count += 1;
        for inc in g.incident(v) {
            let w = inc.to as usize;
            if w >= cells || burnt[w] {
                continue;
            }
            unburnt[w] -= 1;
            if c.heights[w] >= unburnt[w] {
                burnt[w] = true;
                ready.push(w);
            }
        }
    }
    Ok(count == cells)
}

pub const MAX_SCAN_CELLS: usize = 8;

/// Number of recurrent stable configurations, by checking all `4^cells`
/// of them.
pub fn recurrent_count(g: &CylinderGraph) -> Result<u64> {
    require_sink(g)?;
    let cells = g.cell_count();
    if cells > MAX_SCAN_CELLS {
        return Err(Error::ScanTooLarge { cells });
    }
    let mut c = HeightConfig::zeros(g);
    let mut count = 0;
    loop {
        if is_recurrent(g, &c)? {
            count += 1;
        }
        let mut k = 0;
        loop {
            if k == cells {
                return Ok(count);
            }
            if c.heights[k] + 1 < g.degree(k) as u32 {
                c.heights[k] += 1;
                break;
            }
            c.heights[k] = 0;
            k += 1;
        }
    }
}

/// Default burn-in for [`markov_sample_recurrent`]: ten grains per cell.
pub fn default_burn_in(g: &CylinderGraph) -> u64 {
    10 * g.cell_count() as u64
}

/// Runs the driven chain for `steps` grain additions at uniform cells,
/// starting from [`max_stable`]. Recurrent configurations are closed under
/// the dynamics, so the result is recurrent for any `steps`.
pub fn markov_sample_recurrent<R: RngCore + ?Sized>(
    g: &CylinderGraph,
    steps: u64,
    rng: &mut R,
) -> Result<HeightConfig> {
    let mut pile = Sandpile::new(g, max_stable(g)?)?;
    let cells = g.cell_count() as u32;
    for _ in 0..steps {
        pile.add_grain(uniform_below(rng, cells) as usize);
    }
    Ok(pile.into_config())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AvalancheInit {
    /// All cells at height 3.
    #[default]
    Max,
    /// A configuration from [`markov_sample_recurrent`] after the default
    /// burn-in.
    Stationary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrainSite {
    #[default]
    Uniform,
    Fixed(usize),
}

/// Records one avalanche per added grain.
pub fn run_avalanches<R: RngCore + ?Sized>(
    g: &CylinderGraph,
    grains: u64,
    init: AvalancheInit,
    site: GrainSite,
    rng: &mut R,
) -> Result<Vec<AvalancheRecord>> {
    let start = match init {
        AvalancheInit::Max => max_stable(g)?,
        AvalancheInit::Stationary => markov_sample_recurrent(g, default_burn_in(g), rng)?,
    };
    if let GrainSite::Fixed(v) = site {
        if v >= g.cell_count() {
            return Err(Error::VertexOutOfRange(v));
        }
    }
    let mut pile = Sandpile::new(g, start)?;
    let cells = g.cell_count() as u32;
    Ok((0..grains)
        .map(|_| {
            let v = match site {
                GrainSite::Uniform => uniform_below(rng, cells) as usize,
                GrainSite::Fixed(v) => v,
            };
            pile.add_grain(v)
        })
        .collect())
}
