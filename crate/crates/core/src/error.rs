use std::path::PathBuf;

use crate::graph::Vertex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid cylinder dimensions n={n}, m={m} (need n >= 3 and m >= 1)")]
    InvalidDimensions { n: usize, m: usize },

    #[error("vertex {0:?} is not in the graph")]
    UnknownVertex(Vertex),

    #[error("vertex index {0} is out of range")]
    VertexOutOfRange(usize),

    #[error("edge id {0} is out of range")]
    EdgeOutOfRange(u32),

    #[error("edge {0} closes a cycle in the forest")]
    CyclicForest(u32),

    #[error(
        "random walk from vertex {start} exceeded {cap} steps without hitting the target; \
         hitting is almost surely finite on a finite graph, so this is probably a bug"
    )]
    WalkCapExceeded { start: usize, cap: u64 },

    #[error("invalid vertex order: {0}")]
    InvalidOrder(String),

    #[error("not a spanning tree: {0}")]
    NotATree(String),

    #[error("operation requires a graph {}", if *.0 { "with a sink" } else { "without a sink" })]
    SinkMismatch(bool),

    #[error("the sampling trace is missing; sample with trace recording enabled")]
    MissingTrace,

    #[error("spanning tree count {count} exceeds the enumeration cap {cap}")]
    EnumerationCap { count: String, cap: u64 },

    #[error("sample #{0} is not in the tree universe")]
    SampleOutsideUniverse(usize),

    #[error("expected cell count {expected:.2} is below {minimum}; draw more samples")]
    Undersampled { expected: f64, minimum: f64 },

    #[error("only {found} histogram bins qualify for the fit, need at least {required}")]
    InsufficientBins { found: usize, required: usize },

    #[error("configuration has {found} sites, graph has {expected} cells")]
    ConfigSize { found: usize, expected: usize },

    #[error("exhaustive scan over 4^{cells} configurations exceeds the limit")]
    ScanTooLarge { cells: usize },

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
