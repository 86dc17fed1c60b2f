//! `cylust`: sample uniform spanning trees on cylinders, measure trunks,
//! branches and slashes, fit tails and drive sandpile avalanches.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 a bound check
//! failed under `run --assert-bounds`.

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cylinder_ust::experiment::{self, ExperimentSpec, Observable};
use cylinder_ust::graph::{CylinderGraph, Graph};
use cylinder_ust::oracle::{spanning_tree_count, Multigraph};
use cylinder_ust::records::{read_tree_records, write_tree_records, TreeRecord};
use cylinder_ust::sampler::{RngStream, SampleOrder, Wilson};
use cylinder_ust::sandpile::{recurrent_count, run_avalanches, AvalancheInit, GrainSite};
use cylinder_ust::stats::{fit_exponential, FitOptions, Histogram};
use cylinder_ust::structure::{
    canonical_trunk, lr_segments, lr_slash, proof_trunk, sink_trunk, HangingForest, TrunkMode,
};

#[derive(Parser, Debug)]
#[command(
    name = "cylust",
    version,
    about = "Uniform spanning trees on cylinders"
)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for `run` (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct Dims {
    /// Ring circumference.
    #[arg(long)]
    n: usize,
    /// Number of rings.
    #[arg(long)]
    m: usize,
    /// Attach a sink to both end rings.
    #[arg(long)]
    sink: bool,
}

impl Dims {
    fn build(self) -> anyhow::Result<CylinderGraph> {
        Ok(CylinderGraph::build(self.n, self.m, self.sink)?)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Graph queries.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Sample trees with Wilson's algorithm, one JSON line per tree.
    Sample {
        #[command(flatten)]
        dims: Dims,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Record the loop-erased segments.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value_t = OrderArg::Default)]
        order: OrderArg,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Branch lengths of sampled trees; writes branches.jsonl, histogram.csv and maxima.csv.
    Branches {
        #[arg(long = "in")]
        input: PathBuf,
        /// Trunk choice; sink graphs always use the sink trunk.
        #[arg(long, value_enum, default_value_t = TrunkArg::Canonical)]
        trunk: TrunkArg,
    },
    /// Left/right slash sizes of sampled sink trees; writes slash.jsonl and histogram.csv.
    Slash {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Fit N(L) = A exp(-lambda L) to a length,count histogram.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_count: u64,
        /// Inclusive fit range.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        range: Option<Vec<u64>>,
    },
    /// Chi-square test of sampled trees against the enumerated uniform law.
    VerifyUniformity {
        #[command(flatten)]
        dims: Dims,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, value_enum, default_value_t = OrderArg::Default)]
        order: OrderArg,
    },
    /// Exact number of spanning trees.
    CountTrees {
        #[command(flatten)]
        dims: Dims,
    },
    /// Abelian sandpile on the sink graph.
    Sandpile {
        #[command(subcommand)]
        command: SandpileCommand,
    },
    /// Full experiment: sample replicas, aggregate, fit and check bounds.
    Run(RunArgs),
}

#[derive(Subcommand, Debug)]
enum GraphCommand {
    /// Vertex and edge counts and the degree histogram, as JSON.
    Info {
        #[command(flatten)]
        dims: Dims,
    },
}

#[derive(Subcommand, Debug)]
enum SandpileCommand {
    /// Drive one chain; writes avalanches.csv, histogram.csv (topplings) and sites.csv.
    Avalanches {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        grains: u64,
        #[arg(long, value_enum, default_value_t = InitArg::Max)]
        init: InitArg,
        /// Fixed grain site (cell index); uniform when absent.
        #[arg(long)]
        site: Option<usize>,
    },
    /// Count recurrent configurations by exhaustive scan (at most 8 cells).
    RecurrentCount {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON experiment spec; the flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    m: Option<usize>,
    #[arg(long)]
    sink: bool,
    #[arg(long, default_value_t = 100)]
    replicas: u64,
    #[arg(long, value_enum, default_value_t = ObservableArg::Branches)]
    observable: ObservableArg,
    #[arg(long, value_enum)]
    trunk: Option<TrunkArg>,
    #[arg(long, default_value_t = 0)]
    grains: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Max)]
    init: InitArg,
    #[arg(long, default_value_t = 10)]
    min_count: u64,
    /// Also write histogram.svg.
    #[arg(long)]
    svg: bool,
    /// Exit with status 3 if the empirical tail breaks its bound.
    #[arg(long)]
    assert_bounds: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OrderArg {
    Default,
    Reversed,
    TrunkFirst,
}

impl From<OrderArg> for SampleOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Default => SampleOrder::Default,
            OrderArg::Reversed => SampleOrder::Reversed,
            OrderArg::TrunkFirst => SampleOrder::TrunkFirst,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TrunkArg {
    Canonical,
    Proof,
    Sink,
}

impl From<TrunkArg> for TrunkMode {
    fn from(t: TrunkArg) -> Self {
        match t {
            TrunkArg::Canonical => TrunkMode::Canonical,
            TrunkArg::Proof => TrunkMode::ProofTrace,
            TrunkArg::Sink => TrunkMode::Sink,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitArg {
    Max,
    Stationary,
}

impl From<InitArg> for AvalancheInit {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Max => AvalancheInit::Max,
            InitArg::Stationary => AvalancheInit::Stationary,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ObservableArg {
    Branches,
    Depths,
    Slash,
    Avalanches,
}

impl From<ObservableArg> for Observable {
    fn from(o: ObservableArg) -> Self {
        match o {
            ObservableArg::Branches => Observable::Branches,
            ObservableArg::Depths => Observable::Depths,
            ObservableArg::Slash => Observable::Slash,
            ObservableArg::Avalanches => Observable::Avalanches,
        }
    }
}

enum Outcome {
    Done,
    BoundsFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::BoundsFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut out = create(path)?;
    out.write_all(contents.as_bytes())
        .and_then(|_| out.flush())
        .with_context(|| format!("writing {}", path.display()))
}

fn read_trees(path: &Path) -> anyhow::Result<Vec<TreeRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_tree_records(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Graph {
            command: GraphCommand::Info { dims },
        } => {
            let g = dims.build()?;
            print_json(&serde_json::json!({
                "n": g.n(),
                "m": g.m(),
                "sink": g.has_sink(),
                "vertices": g.vertex_count(),
                "edges": g.edge_count(),
                "degree_histogram": g.degree_histogram(),
            }))?;
        }
        Command::Sample {
            dims,
            count,
            trace,
            order,
            out,
        } => {
            let g = dims.build()?;
            let (root, order) = SampleOrder::from(order).resolve(&g);
            let wilson = Wilson::default().with_trace(trace);
            let records = (0..count)
                .map(|k| {
                    let t = wilson.sample(&g, root, &order, &mut RngStream::new(cli.seed, k))?;
                    Ok(TreeRecord::from_tree(&g, &t))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            match out {
                Some(path) => write_tree_records(create(&path)?, &records)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => write_tree_records(io::stdout().lock(), &records)?,
            }
        }
        Command::Branches { input, trunk } => {
            let trees = read_trees(&input)?;
            let mut lines = String::new();
            let mut histogram = Histogram::new();
            let mut maxima = Histogram::new();
            for (k, record) in trees.iter().enumerate() {
                let g = record.graph()?;
                let t = record.to_tree(&g)?;
                let (trunk, class) = if g.has_sink() {
                    let (trunk, class) = sink_trunk(&g, &t)?;
                    (trunk, Some(class))
                } else {
                    match trunk {
                        TrunkArg::Canonical => (canonical_trunk(&g, &t)?, None),
                        TrunkArg::Proof => (proof_trunk(&g, &t)?, None),
                        TrunkArg::Sink => bail!("tree {k} has no sink"),
                    }
                };
                let lengths = HangingForest::new(&t, &trunk).branch_lengths();
                let max = lengths.iter().copied().max().unwrap_or(0);
                for &l in &lengths {
                    histogram.add(u64::from(l));
                }
                maxima.add(u64::from(max));
                lines += &serde_json::to_string(&serde_json::json!({
                    "tree": k,
                    "trunk_length": trunk.len(),
                    "class_index": class,
                    "max": max,
                    "lengths": lengths,
                }))?;
                lines.push('\n');
            }
            let runs = trees.len() as u64;
            write_file(&cli.out_dir.join("branches.jsonl"), &lines)?;
            write_file(
                &cli.out_dir.join("histogram.csv"),
                &histogram.with_replicas(runs).to_csv(),
            )?;
            write_file(&cli.out_dir.join("maxima.csv"), &maxima.to_csv())?;
            eprintln!("{} trees, output in {}", runs, cli.out_dir.display());
        }
        Command::Slash { input } => {
            let trees = read_trees(&input)?;
            let mut lines = String::new();
            let mut histogram = Histogram::new();
            for (k, record) in trees.iter().enumerate() {
                let g = record.graph()?;
                let t = record.to_tree(&g)?;
                let segments = lr_segments(&g, &t)?;
                let slash = lr_slash(&g, &segments);
                let (_, class) = sink_trunk(&g, &t)?;
                histogram.add(slash.size as u64);
                lines += &serde_json::to_string(&serde_json::json!({
                    "tree": k,
                    "size": slash.size,
                    "left": slash.left.len(),
                    "right": slash.right.len(),
                    "class_index": class,
                    "edges": slash.edges,
                }))?;
                lines.push('\n');
            }
            write_file(&cli.out_dir.join("slash.jsonl"), &lines)?;
            write_file(&cli.out_dir.join("histogram.csv"), &histogram.to_csv())?;
            eprintln!("{} trees, output in {}", trees.len(), cli.out_dir.display());
        }
        Command::Fit {
            input,
            min_count,
            range,
        } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let h = Histogram::from_csv(&text)
                .with_context(|| format!("parsing {}", input.display()))?;
            let options = FitOptions {
                min_count,
                range: range.map(|r| (r[0], r[1])),
            };
            print_json(&fit_exponential(&h, options)?)?;
        }
        Command::VerifyUniformity {
            dims,
            samples,
            order,
        } => {
            let g = dims.build()?;
            print_json(&experiment::verify_uniformity(
                &g,
                samples,
                order.into(),
                cli.seed,
            )?)?;
        }
        Command::CountTrees { dims } => {
            let g = dims.build()?;
            println!("{}", spanning_tree_count(&Multigraph::from_graph(&g)));
        }
        Command::Sandpile { command } => match command {
            SandpileCommand::Avalanches {
                n,
                m,
                grains,
                init,
                site,
            } => {
                let g = CylinderGraph::build(n, m, true)?;
                let site = site.map_or(GrainSite::Uniform, GrainSite::Fixed);
                let mut rng = RngStream::new(cli.seed, 0);
                let records = run_avalanches(&g, grains, init.into(), site, &mut rng)?;
                let mut csv = String::from("grain,site,topplings,distinct_sites\n");
                let mut topplings = Histogram::new().with_replicas(1);
                let mut sites = Histogram::new().with_replicas(1);
                for (k, r) in records.iter().enumerate() {
                    csv += &format!("{k},{},{},{}\n", r.site, r.topplings, r.distinct_sites);
                    topplings.add(r.topplings);
                    sites.add(r.distinct_sites);
                }
                write_file(&cli.out_dir.join("avalanches.csv"), &csv)?;
                write_file(&cli.out_dir.join("histogram.csv"), &topplings.to_csv())?;
                write_file(&cli.out_dir.join("sites.csv"), &sites.to_csv())?;
                eprintln!("{grains} grains, output in {}", cli.out_dir.display());
            }
            SandpileCommand::RecurrentCount { n, m } => {
                let g = CylinderGraph::build(n, m, true)?;
                println!("{}", recurrent_count(&g)?);
            }
        },
        Command::Run(args) => {
            let mut spec = match &args.spec {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<ExperimentSpec>(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => {
                    let observable = Observable::from(args.observable);
                    let (n, m) = (args.n.unwrap(), args.m.unwrap());
                    let mut spec = ExperimentSpec::new(n, m, observable);
                    spec.sink |= args.sink;
                    spec.replicas = args.replicas;
                    spec.seed = cli.seed;
                    spec.trunk = args.trunk.map(TrunkMode::from);
                    spec.grains = args.grains;
                    spec.init = args.init.into();
                    spec.min_count = args.min_count;
                    spec.svg = args.svg;
                    spec
                }
            };
            if cli.threads.is_some() {
                spec.threads = cli.threads;
            }
            if spec.out_dir.is_none() {
                spec.out_dir = Some(cli.out_dir.clone());
            }
            let (outcome, files) = experiment::run_experiment(&spec)?;
            for f in &files {
                eprintln!("wrote {}", f.display());
            }
            print_json(&serde_json::json!({
                "fit": outcome.fit.as_ref().ok(),
                "fit_error": outcome.fit.as_ref().err(),
                "bounds_passed": outcome.bounds.as_ref().map(|b| b.passed()),
                "first_violation": outcome.bounds.as_ref().and_then(|b| b.first_violation),
            }))?;
            if args.assert_bounds && outcome.bounds.as_ref().is_some_and(|b| !b.passed()) {
                return Ok(Outcome::BoundsFailed);
            }
        }
    }
    Ok(Outcome::Done)
}
