//! Hierarchical retrieval on directed acyclic hierarchies with dual-encoder
//! embeddings.
//!
//! A hierarchy is a DAG whose edges point child to parent. A query document
//! must retrieve every document reachable from it, itself included, so the
//! relevant set of a node is its reachability cone and retrieval quality is
//! recall at the relevant-set size. The crate provides:
//!
//! * [`hierarchy`]: DAG ingestion, perfect-tree generation, transitive
//!   reachability with distances, and optional distance caps.
//! * [`construct`]: seeded Gaussian embeddings whose query vectors are
//!   normalized sums of raw document draws, a one-hot baseline, and
//!   separation measurement with a feasible-dimension search.
//! * [`sampler`]: training-pair samplers. Uniform sampling over relevant
//!   pairs, two heavy-tail variants that push probability mass toward
//!   distant pairs, and a mixture of the two.
//! * [`trainer`]: lookup-table dual encoders under an in-batch softmax
//!   loss with analytic gradients, SGD with heavy-ball momentum, and a
//!   phased training loop with best-checkpoint selection.
//! * [`eval`]: brute-force recall at the relevant-set size, sliced by
//!   hierarchy distance, plus a smallest-sufficient-dimension sweep.
//!
//! Everything is deterministic given the seeds: random streams are derived
//! from labeled sub-seeds and parallel reductions have fixed shapes, so
//! repeated runs produce bit-identical artifacts.

pub mod construct;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod sampler;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
