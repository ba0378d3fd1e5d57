//! Crate-wide error type.
//!
//! Variants are grouped by origin: structural problems in a hierarchy,
//! shape or range mismatches between tables and node sets, numerical
//! failures during training, and file-format problems. `InvalidParameter`
//! always names the offending parameter so callers can surface it verbatim
//! (the CLI maps it to a config error exit).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hierarchy has no nodes")]
    EmptyHierarchy,

    #[error("cycle detected in edge relation at node {node:?}")]
    CycleDetected { node: String },

    #[error("malformed edge list at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("node index {node} out of range for {count} nodes")]
    NodeOutOfRange { node: usize, count: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("column count mismatch: table has {got}, expected {expected}")]
    CountMismatch { expected: usize, got: usize },

    #[error("column {column} has zero norm and cannot be normalized")]
    ZeroNormColumn { column: usize },

    #[error("hierarchy has no pair at distance >= 1; long-distance sampling is undefined")]
    NoLongDistancePairs,

    #[error("evaluation pair (query {query}, document {doc}) is not a matching pair")]
    PairNotRelevant { query: usize, doc: usize },

    #[error("k = {k} out of range for {count} documents")]
    KOutOfRange { k: usize, count: usize },

    #[error("non-finite parameter entry in {table} column {column}")]
    NonFiniteParameter { table: &'static str, column: usize },

    #[error("non-finite loss at phase {phase}, step {step}")]
    NonFiniteLoss { phase: usize, step: u64 },

    #[error("{what} evaluated to a non-finite value")]
    NonFiniteValue { what: &'static str },

    #[error("dimension search exhausted: no feasible dimension found up to {limit}")]
    SearchExhausted { limit: usize },

    #[error("unrecognized file header (expected {expected:?})")]
    BadMagic { expected: &'static str },

    #[error("corrupt file: {reason}")]
    CorruptFile { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
