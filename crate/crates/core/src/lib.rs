//! Exact oracles, Markov chains and couplings for multi-spin Gibbs
//! distributions on small graphs.

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod oracle;
pub mod partition;
pub mod rng;
pub mod spin;
pub mod transport;

pub use error::{Result, SpinError};
pub use graph::Graph;
pub use oracle::{ExactDistribution, TransitionMatrix};
pub use partition::Partition;
pub use spin::{PartialConfig, Spin, SpinSystem, MINUS, PLUS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
