//! Multi-level graph visualization built on personalized PageRank distances.

pub mod error;
pub mod generators;
pub mod graph;
pub mod hierarchy;
pub mod layout;
pub mod metrics;
pub mod pdist;
pub mod pipeline;
pub mod ppr;

pub use error::{Error, Result};
