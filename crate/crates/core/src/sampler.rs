//! Training-pair samplers.
//!
//! Every sampler emits (query, document) pairs with the document inside the
//! query's relevant set. Four regimes differ in how they weight pair
//! distance:
//!
//! * regular: query uniform over all nodes, document uniform over the
//!   query's relevant set;
//! * heavy-tail (bucket): a nonzero distance `t` is drawn uniformly over
//!   the distances realized anywhere in the hierarchy, the query uniformly
//!   among nodes having a match at distance `t` or beyond, the document
//!   uniformly among the query's matches at exactly `t`; self-pairs never
//!   occur;
//! * heavy-tail (proportional): query uniform over nodes with at least one
//!   non-self match, document drawn with probability proportional to its
//!   distance; self-pairs never occur;
//! * rebalanced: an exact `round(p * count)` regular pairs, the remainder
//!   from a heavy-tail sampler, shuffled together.
//!
//! Samplers are deterministic functions of (hierarchy, strategy, seed) and
//! hold no state beyond their generator; each distance bucket `1..=maxdist`
//! of a node is nonempty because a shortest path of length `t` passes
//! through matches at every smaller distance.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, NodeId};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeavyTailKind {
    /// Bucket-uniform over nonzero distances.
    Bucket,
    /// Document probability proportional to distance.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    Regular,
    HeavyTail(HeavyTailKind),
    /// `mix_p` is the regular share; the rest comes from `heavy`.
    Rebalanced { mix_p: f64, heavy: HeavyTailKind },
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrategyKind::Regular => write!(f, "regular"),
            StrategyKind::HeavyTail(HeavyTailKind::Bucket) => write!(f, "heavy-tail-bucket"),
            StrategyKind::HeavyTail(HeavyTailKind::Proportional) => {
                write!(f, "heavy-tail-proportional")
            }
            StrategyKind::Rebalanced { mix_p, heavy } => {
                let heavy = match heavy {
                    HeavyTailKind::Bucket => "bucket",
                    HeavyTailKind::Proportional => "proportional",
                };
                write!(f, "rebalanced(p={mix_p},heavy={heavy})")
            }
        }
    }
}

/// A sampling regime plus the seed of its generator stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingStrategy {
    pub kind: StrategyKind,
    pub seed: u64,
}

/// Parallel query/document index lists; slot `k` is one training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub queries: Vec<NodeId>,
    pub documents: Vec<NodeId>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Verifies that every document lies in its query's relevant set.
    pub fn validate_against(&self, h: &Hierarchy) -> Result<()> {
        for (&q, &d) in self.queries.iter().zip(&self.documents) {
            for node in [q, d] {
                if node as usize >= h.node_count() {
                    return Err(Error::NodeOutOfRange {
                        node: node as usize,
                        count: h.node_count(),
                    });
                }
            }
            if !h.relevant_set(q).contains(d) {
                return Err(Error::PairNotRelevant {
                    query: q as usize,
                    doc: d as usize,
                });
            }
        }
        Ok(())
    }
}

/// Streaming sampler: repeated [`PairSampler::draw`] calls continue one
/// generator stream, which is how training consumes fresh batches per step.
pub struct PairSampler<'h> {
    h: &'h Hierarchy,
    kind: StrategyKind,
    rng: ChaCha8Rng,
    /// For each distance `t` (index `t - 1`), the nodes whose farthest match
    /// is at least `t`. Built only for strategies that need it.
    by_min_reach: Vec<Vec<NodeId>>,
    /// Nodes with at least one non-self match.
    deep_nodes: Vec<NodeId>,
}

impl<'h> PairSampler<'h> {
    pub fn new(h: &'h Hierarchy, strategy: &SamplingStrategy) -> Result<Self> {
        let needs_heavy = match strategy.kind {
            StrategyKind::Regular => false,
            StrategyKind::HeavyTail(_) => true,
            // A pure-regular mixture never touches the heavy sampler, so an
            // edgeless hierarchy is still valid there.
            StrategyKind::Rebalanced { mix_p, .. } => {
                if !(0.0..=1.0).contains(&mix_p) {
                    return Err(Error::InvalidParameter {
                        name: "mix_p",
                        reason: format!("{mix_p} outside [0, 1]"),
                    });
                }
                mix_p < 1.0
            }
        };

        let mut by_min_reach = Vec::new();
        let mut deep_nodes = Vec::new();
        if needs_heavy {
            let global_max = h.max_distance();
            if global_max == 0 {
                return Err(Error::NoLongDistancePairs);
            }
            by_min_reach = vec![Vec::new(); global_max as usize];
            for u in 0..h.node_count() as NodeId {
                let far = h.relevant_set(u).max_distance();
                for t in 1..=far {
                    by_min_reach[(t - 1) as usize].push(u);
                }
                if far >= 1 {
                    deep_nodes.push(u);
                }
            }
        }

        Ok(Self {
            h,
            kind: strategy.kind,
            rng: rng_for(strategy.seed, "sampler/stream", 0),
            by_min_reach,
            deep_nodes,
        })
    }

    /// Draws `count` pairs, advancing the stream.
    pub fn draw(&mut self, count: usize) -> PairBatch {
        let mut queries = Vec::with_capacity(count);
        let mut documents = Vec::with_capacity(count);
        match self.kind {
            StrategyKind::Regular => {
                for _ in 0..count {
                    let (q, d) = self.draw_regular();
                    queries.push(q);
                    documents.push(d);
                }
            }
            StrategyKind::HeavyTail(kind) => {
                for _ in 0..count {
                    let (q, d) = self.draw_heavy(kind);
                    queries.push(q);
                    documents.push(d);
                }
            }
            StrategyKind::Rebalanced { mix_p, heavy } => {
                let regular_count = ((mix_p * count as f64).round() as usize).min(count);
                let mut pairs = Vec::with_capacity(count);
                for _ in 0..regular_count {
                    pairs.push(self.draw_regular());
                }
                for _ in regular_count..count {
                    pairs.push(self.draw_heavy(heavy));
                }
                pairs.shuffle(&mut self.rng);
                for (q, d) in pairs {
                    queries.push(q);
                    documents.push(d);
                }
            }
        }
        PairBatch { queries, documents }
    }

    fn draw_regular(&mut self) -> (NodeId, NodeId) {
        let q = self.rng.random_range(0..self.h.node_count()) as NodeId;
        let set = self.h.relevant_set(q);
        let d = set.nodes()[self.rng.random_range(0..set.len())];
        (q, d)
    }

    fn draw_heavy(&mut self, kind: HeavyTailKind) -> (NodeId, NodeId) {
        match kind {
            HeavyTailKind::Bucket => {
                let t = self.rng.random_range(0..self.by_min_reach.len()) as u32 + 1;
                let pool = &self.by_min_reach[(t - 1) as usize];
                let q = pool[self.rng.random_range(0..pool.len())];
                let set = self.h.relevant_set(q);
                let bucket: Vec<NodeId> = set
                    .nodes()
                    .iter()
                    .zip(set.distances())
                    .filter(|&(_, &d)| d == t)
                    .map(|(&v, _)| v)
                    .collect();
                let d = bucket[self.rng.random_range(0..bucket.len())];
                (q, d)
            }
            HeavyTailKind::Proportional => {
                // Uniform over nodes with a non-self match; equivalent to
                // uniform-with-resampling over all nodes.
                let q = self.deep_nodes[self.rng.random_range(0..self.deep_nodes.len())];
                let set = self.h.relevant_set(q);
                let total: u64 = set.distances().iter().map(|&d| u64::from(d)).sum();
                let mut ticket = self.rng.random_range(0..total);
                for (&v, &d) in set.nodes().iter().zip(set.distances()) {
                    let w = u64::from(d);
                    if ticket < w {
                        return (q, v);
                    }
                    ticket -= w;
                }
                unreachable!("ticket below total weight selects a document");
            }
        }
    }
}

/// Uniform query, uniform document within the query's relevant set.
pub fn sample_regular(h: &Hierarchy, count: usize, seed: u64) -> Result<PairBatch> {
    sample_with(
        h,
        count,
        SamplingStrategy {
            kind: StrategyKind::Regular,
            seed,
        },
    )
}

/// Bucket-uniform heavy-tail sampling; never emits distance-0 pairs.
pub fn sample_heavy_tail_bucket(h: &Hierarchy, count: usize, seed: u64) -> Result<PairBatch> {
    sample_with(
        h,
        count,
        SamplingStrategy {
            kind: StrategyKind::HeavyTail(HeavyTailKind::Bucket),
            seed,
        },
    )
}

/// Distance-proportional heavy-tail sampling; never emits distance-0 pairs.
pub fn sample_heavy_tail_proportional(h: &Hierarchy, count: usize, seed: u64) -> Result<PairBatch> {
    sample_with(
        h,
        count,
        SamplingStrategy {
            kind: StrategyKind::HeavyTail(HeavyTailKind::Proportional),
            seed,
        },
    )
}

/// Exact `round(p * count)` regular pairs plus heavy-tail remainder,
/// shuffled.
pub fn sample_rebalanced(
    h: &Hierarchy,
    count: usize,
    p: f64,
    heavy: HeavyTailKind,
    seed: u64,
) -> Result<PairBatch> {
    sample_with(
        h,
        count,
        SamplingStrategy {
            kind: StrategyKind::Rebalanced { mix_p: p, heavy },
            seed,
        },
    )
}

fn sample_with(h: &Hierarchy, count: usize, strategy: SamplingStrategy) -> Result<PairBatch> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            reason: "need at least one pair".to_string(),
        });
    }
    Ok(PairSampler::new(h, &strategy)?.draw(count))
}

/// Histogram of pair distances; every pair must be a matching pair.
pub fn distance_histogram(h: &Hierarchy, batch: &PairBatch) -> Result<BTreeMap<u32, u64>> {
    let mut hist = BTreeMap::new();
    for (&q, &d) in batch.queries.iter().zip(&batch.documents) {
        let dist = h
            .relevant_set(q)
            .distance_to(d)
            .ok_or(Error::PairNotRelevant {
                query: q as usize,
                doc: d as usize,
            })?;
        *hist.entry(dist).or_insert(0u64) += 1;
    }
    Ok(hist)
}

/// Writes one `query<TAB>document` index pair per line, preceded by a header
/// comment recording strategy, seed, and the hierarchy fingerprint.
pub fn export_pairs(
    batch: &PairBatch,
    strategy: &SamplingStrategy,
    h: &Hierarchy,
    mut w: impl Write,
) -> Result<()> {
    writeln!(
        w,
        "# strategy={} seed={} pairs={} hierarchy={:#018x}",
        strategy.kind,
        strategy.seed,
        batch.len(),
        h.content_hash()
    )?;
    for (&q, &d) in batch.queries.iter().zip(&batch.documents) {
        writeln!(w, "{q}\t{d}")?;
    }
    Ok(())
}
