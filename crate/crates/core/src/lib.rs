//! Dyadic multiscale analysis of partial sums for sequences whose covariances
//! decay like a power of the lag.
//!
//! - [`bounds`]: closed-form correlation-sum bounds and the Chebyshev bound on
//!   block badness.
//! - [`oracle`]: brute-force counterparts of those bounds and randomized sweeps.
//! - [`genseq`]: Gaussian generators with exact autocovariances.
//! - [`multiscale`]: dyadic block sums, bad-block censuses, greedy partitions
//!   and the deterministic rate lemma.
//! - [`montecarlo`]: many-path experiments and their CSV/JSON reports.

pub mod bounds;
pub mod genseq;
pub mod montecarlo;
pub mod multiscale;
pub mod oracle;

pub use bounds::{CovarianceHypothesis, IndexSet};
pub use genseq::{GeneratorKind, GeneratorSpec, PathGenerator, SamplePath};
pub use montecarlo::{ExperimentConfig, McResult};
pub use multiscale::{BadBlockCensus, BlockSumTree, DyadicBlock, GreedyPartition};
