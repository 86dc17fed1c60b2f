//! Uniform spanning trees on cylindrical graphs.
pub mod error;
pub mod experiment;
pub mod graph;
pub mod oracle;
pub mod records;
pub mod sampler;
pub mod sandpile;
pub mod stats;
pub mod structure;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cylinders.md")]
    mod cylinders {}
    #[doc = include_str!("../../../book/src/wilson.md")]
    mod wilson {}
    #[doc = include_str!("../../../book/src/trunks-and-branches.md")]
    mod trunks_and_branches {}
    #[doc = include_str!("../../../book/src/slash.md")]
    mod slash {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/sandpile.md")]
    mod sandpile {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
