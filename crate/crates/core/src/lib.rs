//! Online SLA decomposition across network domains.
//!
//! An end-to-end latency target `L` is split into per-domain targets
//! `x^1..x^D` so that the summed true latency stays within `L` while the
//! total resource cost is minimal. Latency and cost of each domain are
//! unknown and observed with noise; Gaussian-process surrogates with lower
//! confidence bounds drive the choice every decision round.

pub mod acquisition;
pub mod algorithms;
pub mod confidence;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod simulator;
pub mod surrogate;

pub use acquisition::{Decomposition, SearchGrid, SolverKind};
pub use algorithms::{AlgoConfig, Algorithm, RunRecord};
pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use simulator::{DomainSpec, EnvironmentSpec};
