//! Seeded, parallel experiments: sample many trees (or sandpile chains),
//! measure an observable, aggregate, fit and check the tail bounds.
//!
//! Replica `r` draws all of its randomness from `RngStream::new(seed, r)`
//! and replicas are merged in index order, so the output files depend only
//! on the spec and never on the number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CylinderGraph;
use crate::oracle::{
    chi_square_counts, enumerate_spanning_trees, spanning_tree_count, tally, Multigraph,
};
use crate::sampler::{trunk_first_order, RngStream, SampleOrder, Wilson};
use crate::sandpile::{run_avalanches, AvalancheInit, GrainSite};
use crate::stats::{
    bound_check, bound_constants, fit_exponential, BoundReport, ExpFit, FitOptions, Histogram,
    TailBound, TailCurve,
};
use crate::structure::{
    canonical_trunk, lr_segments, lr_slash, proof_trunk, sink_trunk, HangingForest, Trunk,
    TrunkMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    /// Length of every branch, one per hanging leaf.
    Branches,
    /// Distance to the trunk of every off-trunk vertex.
    Depths,
    /// Size of the left/right slash (sink graphs).
    Slash,
    /// Toppling counts of driven sandpile avalanches (sink graphs).
    Avalanches,
}

fn default_min_count() -> u64 {
    10
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub sink: bool,
    pub replicas: u64,
    pub seed: u64,
    /// Defaults to the canonical trunk, or the sink trunk on sink graphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunk: Option<TrunkMode>,
    pub observable: Observable,
    /// Grains added per replica for avalanches.
    #[serde(default)]
    pub grains: u64,
    #[serde(default)]
    pub init: AvalancheInit,
    #[serde(default)]
    pub site: GrainSite,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    /// Worker threads; `None` uses the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
}

impl ExperimentSpec {
    pub fn new(n: usize, m: usize, observable: Observable) -> Self {
        ExperimentSpec {
            n,
            m,
            sink: matches!(observable, Observable::Slash | Observable::Avalanches),
            replicas: 100,
            seed: 0,
            trunk: None,
            observable,
            grains: 0,
            init: AvalancheInit::default(),
            site: GrainSite::default(),
            min_count: default_min_count(),
            threads: None,
            out_dir: None,
            svg: false,
        }
    }

    /// The trunk mode that will be used, after defaults.
    pub fn trunk_mode(&self) -> TrunkMode {
        self.trunk.unwrap_or(if self.sink {
            TrunkMode::Sink
        } else {
            TrunkMode::Canonical
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n < 3 || self.m < 1 {
            return bad(format!(
                "need n >= 3 and m >= 1, got n={} m={}",
                self.n, self.m
            ));
        }
        if self.replicas == 0 {
            return bad("replicas must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        match self.observable {
            Observable::Slash | Observable::Avalanches if !self.sink => {
                return bad(format!("{:?} needs a sink graph", self.observable));
            }
            Observable::Avalanches if self.grains == 0 => {
                return bad("avalanches need grains >= 1".into());
            }
            _ => {}
        }
        if let GrainSite::Fixed(v) = self.site {
            if v >= self.n * self.m {
                return bad(format!("grain site {v} is not a cell"));
            }
        }
        match (self.trunk_mode(), self.sink) {
            (TrunkMode::Sink, false) => bad("the sink trunk needs a sink graph".into()),
            (TrunkMode::Canonical | TrunkMode::ProofTrace, true) => {
                bad("sink graphs use the sink trunk".into())
            }
            _ => Ok(()),
        }
    }
}

/// What one replica contributed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: u64,
    /// Largest observed value, 0 when there are none.
    pub max: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunk_length: Option<usize>,
    /// Ring of the left end of the sink trunk, −1 without a left side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_index: Option<i64>,
    pub values: Vec<u64>,
    /// Avalanches only: toppled sites per grain, parallel to `values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct_sites: Option<Vec<u64>>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub records: Vec<ReplicaRecord>,
    /// All values of all replicas.
    pub histogram: Histogram,
    /// One maximum per replica.
    pub maxima: Histogram,
    pub fit: std::result::Result<ExpFit, String>,
    pub bounds: Option<BoundReport>,
}

fn trunk_for(
    spec: &ExperimentSpec,
    g: &CylinderGraph,
    t: &crate::sampler::SpanningTree,
) -> Result<(Trunk, Option<i64>)> {
    Ok(match spec.trunk_mode() {
        TrunkMode::Canonical => (canonical_trunk(g, t)?, None),
        TrunkMode::ProofTrace => (proof_trunk(g, t)?, None),
        TrunkMode::Sink => {
            let (trunk, class) = sink_trunk(g, t)?;
            (trunk, Some(class))
        }
    })
}

fn run_replica(
    spec: &ExperimentSpec,
    g: &CylinderGraph,
    root: usize,
    order: &[usize],
    replica: u64,
) -> Result<ReplicaRecord> {
    let mut rng = RngStream::new(spec.seed, replica);
    let mut record = ReplicaRecord {
        replica,
        max: 0,
        trunk_length: None,
        class_index: None,
        values: Vec::new(),
        distinct_sites: None,
    };
    match spec.observable {
        Observable::Avalanches => {
            let avalanches = run_avalanches(g, spec.grains, spec.init, spec.site, &mut rng)?;
            record.values = avalanches.iter().map(|a| a.topplings).collect();
            record.distinct_sites = Some(avalanches.iter().map(|a| a.distinct_sites).collect());
        }
        Observable::Slash => {
            let t = Wilson::default().sample(g, root, order, &mut rng)?;
            let slash = lr_slash(g, &lr_segments(g, &t)?);
            record.values = vec![slash.size as u64];
        }
        Observable::Branches | Observable::Depths => {
            let sampler = Wilson::default().with_trace(spec.trunk_mode() == TrunkMode::ProofTrace);
            let t = sampler.sample(g, root, order, &mut rng)?;
            let (trunk, class) = trunk_for(spec, g, &t)?;
            let forest = HangingForest::new(&t, &trunk);
            record.values = if spec.observable == Observable::Branches {
                forest.branch_lengths().into_iter().map(u64::from).collect()
            } else {
                forest
                    .depths()
                    .iter()
                    .filter(|&&d| d > 0)
                    .map(|&d| u64::from(d))
                    .collect()
            };
            record.trunk_length = Some(trunk.len());
            record.class_index = class;
        }
    }
    record.max = record.values.iter().copied().max().unwrap_or(0);
    Ok(record)
}

/// Runs all replicas and aggregates them without touching the disk.
pub fn simulate(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let g = CylinderGraph::build(spec.n, spec.m, spec.sink)?;
    let (root, order) = trunk_first_order(&g);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let records: Vec<ReplicaRecord> = pool.install(|| {
        (0..spec.replicas)
            .into_par_iter()
            .map(|r| run_replica(spec, &g, root, &order, r))
            .collect::<Result<_>>()
    })?;

    let mut histogram = Histogram::new();
    let mut maxima = Histogram::new();
    for r in &records {
        let mut own = Histogram::from_values(r.values.iter().copied()).with_replicas(1);
        histogram.merge(&own);
        own = Histogram::from_values([r.max]).with_replicas(1);
        maxima.merge(&own);
    }
    let fit = fit_exponential(
        &histogram,
        FitOptions {
            min_count: spec.min_count,
            range: None,
        },
    )
    .map_err(|e| e.to_string());
    let bound = match spec.observable {
        Observable::Branches | Observable::Depths => {
            Some(TailBound::branches(&bound_constants(spec.n)?, spec.m))
        }
        Observable::Slash => Some(TailBound::slash(&bound_constants(spec.n)?)),
        Observable::Avalanches => None,
    };
    let bounds = bound.map(|b| bound_check(&TailCurve::from_maxima(&maxima), b));
    Ok(ExperimentOutcome {
        spec: spec.clone(),
        records,
        histogram,
        maxima,
        fit,
        bounds,
    })
}

impl ExperimentOutcome {
    /// Writes `records.jsonl`, `histogram.csv`, `maxima.csv`, `fit.json`,
    /// `bounds.json` (when a bound applies) and `histogram.svg` (when
    /// requested) into `dir`, returning the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut emit = |name: &str, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(file);
            body(&mut out)
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok::<_, Error>(())
        };

        emit("records.jsonl", &|out| {
            for r in &self.records {
                serde_json::to_writer(&mut *out, r)?;
                out.write_all(b"\n")?;
            }
            Ok(())
        })?;
        emit("histogram.csv", &|out| {
            out.write_all(self.histogram.to_csv().as_bytes())
        })?;
        emit("maxima.csv", &|out| {
            out.write_all(self.maxima.to_csv().as_bytes())
        })?;
        emit("fit.json", &|out| {
            match &self.fit {
                Ok(fit) => serde_json::to_writer_pretty(&mut *out, fit)?,
                Err(msg) => {
                    serde_json::to_writer_pretty(&mut *out, &serde_json::json!({ "error": msg }))?
                }
            }
            out.write_all(b"\n")
        })?;
        if let Some(bounds) = &self.bounds {
            emit("bounds.json", &|out| {
                serde_json::to_writer_pretty(&mut *out, bounds)?;
                out.write_all(b"\n")
            })?;
        }
        if self.spec.svg {
            let title = format!(
                "{:?}, n={}, m={}{}, {} replicas",
                self.spec.observable,
                self.spec.n,
                self.spec.m,
                if self.spec.sink { ", sink" } else { "" },
                self.spec.replicas
            );
            let svg = histogram_svg(&self.histogram, &title);
            emit("histogram.svg", &|out| out.write_all(svg.as_bytes()))?;
        }
        Ok(written)
    }
}

/// Simulates and writes the outputs into the spec's `out_dir` (default
/// `out`).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(ExperimentOutcome, Vec<PathBuf>)> {
    let outcome = simulate(spec)?;
    let dir = spec.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let files = outcome.write(&dir)?;
    Ok((outcome, files))
}

/// Largest tree universe [`verify_uniformity`] will enumerate.
pub const UNIVERSE_CAP: u64 = 1_000_000;

/// Samples `samples` trees with one stream and counts how often each member
/// of `universe` (sorted edge lists) occurs.
pub fn tree_frequencies(
    g: &CylinderGraph,
    universe: &[Vec<crate::graph::EdgeId>],
    samples: u64,
    order: SampleOrder,
    rng: &mut RngStream,
) -> Result<Vec<u64>> {
    let (root, order) = order.resolve(g);
    let wilson = Wilson::default();
    let trees = (0..samples)
        .map(|_| Ok(wilson.sample(g, root, &order, rng)?.edges().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    tally(&trees, universe)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformityReport {
    /// Size of the enumerated universe.
    pub count: u64,
    /// Matrix-tree count, as a decimal string.
    pub determinant: String,
    pub samples: u64,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test of sampled trees against the uniform law on the
/// enumerated universe. Uses `RngStream::new(seed, 0)`.
pub fn verify_uniformity(
    g: &CylinderGraph,
    samples: u64,
    order: SampleOrder,
    seed: u64,
) -> Result<UniformityReport> {
    let multigraph = Multigraph::from_graph(g);
    let universe = enumerate_spanning_trees(&multigraph, UNIVERSE_CAP)?;
    let observed = tree_frequencies(g, &universe, samples, order, &mut RngStream::new(seed, 0))?;
    let expected = vec![samples as f64 / universe.len() as f64; universe.len()];
    let test = chi_square_counts(&observed, &expected)?;
    Ok(UniformityReport {
        count: universe.len() as u64,
        determinant: spanning_tree_count(&multigraph).to_string(),
        samples,
        statistic: test.statistic,
        dof: test.dof,
        p_value: test.p_value,
    })
}

/// Bar chart of the per-replica average count at each length.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 48.0;
    let bars = h.averaged();
    let top = h.max_length().unwrap_or(0) + 1;
    let peak = bars
        .iter()
        .map(|b| b.1)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let slot = (W - 2.0 * PAD) / top as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    )
    .unwrap();
    for (length, avg) in &bars {
        let height = avg / peak * (H - 2.0 * PAD);
        writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue"><title>{length}: {avg:.3}</title></rect>"#,
            PAD + *length as f64 * slot + slot * 0.1,
            H - PAD - height,
            slot * 0.8,
            height
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = H - PAD,
        x2 = W - PAD
    )
    .unwrap();
    let step = (top as f64 / 10.0).ceil().max(1.0) as u64;
    for l in (0..top).step_by(step as usize) {
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{l}</text>"#,
            PAD + (l as f64 + 0.5) * slot,
            H - PAD + 16.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">max avg {peak:.2}</text>"#,
        PAD - 8.0
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
