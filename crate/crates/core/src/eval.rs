//! Exact retrieval evaluation, sliced by pair distance.
//!
//! Retrieval is brute force: every query is scored against every document
//! and the top `k = |S(q)|` documents are taken, with ties broken by
//! ascending document index so results are deterministic. A pair (q, x)
//! counts as retrieved when x ranks inside that cutoff. Recall is reported
//! overall, per distance slice, and as the minimum over slices; the overall
//! value is exactly the pair-count-weighted mean of the slices because both
//! are computed from the same hit counters.
//!
//! Scores mirror training: query and document embeddings are the normalized
//! table columns whenever the parameter set says scores are cosine.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, NodeId};
use crate::sampler::{sample_regular, PairBatch};
use crate::seed::derive_seed;
use crate::trainer::{train, Checkpoint, DualEncoderParams, PhaseConfig};

/// One distance slice: fraction retrieved and how many pairs it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceSlice {
    pub recall: f64,
    pub pairs: u64,
}

/// Recall of one model on one pair set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub overall_recall: f64,
    pub per_distance: BTreeMap<u32, DistanceSlice>,
    pub min_slice_recall: f64,
    pub dimension: usize,
    pub step: Option<u64>,
    pub seed: u64,
}

impl EvalReport {
    /// CSV form: one row per distance slice, then the min and overall
    /// summary rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "slice,recall,pairs")?;
        for (d, slice) in &self.per_distance {
            writeln!(w, "{d},{:.6},{}", slice.recall, slice.pairs)?;
        }
        let min_pairs = self
            .per_distance
            .values()
            .filter(|s| s.recall == self.min_slice_recall)
            .map(|s| s.pairs)
            .next()
            .unwrap_or(0);
        let total: u64 = self.per_distance.values().map(|s| s.pairs).sum();
        writeln!(w, "min,{:.6},{min_pairs}", self.min_slice_recall)?;
        writeln!(w, "overall,{:.6},{total}", self.overall_recall)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Indices of the `k` largest inner products against `query`, descending,
/// ties broken by ascending document index.
pub fn top_k(query: &[f64], docs: &EmbeddingTable, k: usize) -> Result<Vec<NodeId>> {
    if k == 0 || k > docs.count() {
        return Err(Error::KOutOfRange {
            k,
            count: docs.count(),
        });
    }
    if query.len() != docs.dim() {
        return Err(Error::DimMismatch {
            left: query.len(),
            right: docs.dim(),
        });
    }
    let mut scored: Vec<(f64, NodeId)> = (0..docs.count())
        .map(|j| (dot(query, docs.column(j)), j as NodeId))
        .collect();
    let cmp = |a: &(f64, NodeId), b: &(f64, NodeId)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    Ok(scored.into_iter().map(|(_, j)| j).collect())
}

/// Recall at `k = |S(q)|`: the per-query cutoff is the size of the query's
/// relevant set. Slices use the hierarchy distance of each evaluated pair.
pub fn recall_at_relevant(
    params: &DualEncoderParams,
    h: &Hierarchy,
    pairs: &PairBatch,
    seed: u64,
    step: Option<u64>,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "pairs",
            reason: "evaluation set is empty".to_string(),
        });
    }
    for table in [&params.query_table, &params.doc_table] {
        if table.count() != h.node_count() {
            return Err(Error::CountMismatch {
                expected: h.node_count(),
                got: table.count(),
            });
        }
    }
    let (queries, docs) = params.scoring_tables()?;

    let groups = group_by_query(pairs, h.node_count())?;
    let per_group: Vec<Result<Vec<(u32, bool)>>> = groups
        .par_iter()
        .map(|(q, doc_ids)| {
            let set = h.relevant_set(*q);
            let cutoff = top_k(queries.column(*q as usize), &docs, set.len())?;
            let retrieved: Vec<NodeId> = {
                let mut r = cutoff;
                r.sort_unstable();
                r
            };
            doc_ids
                .iter()
                .map(|&d| {
                    let dist = set.distance_to(d).ok_or(Error::PairNotRelevant {
                        query: *q as usize,
                        doc: d as usize,
                    })?;
                    Ok((dist, retrieved.binary_search(&d).is_ok()))
                })
                .collect()
        })
        .collect();

    let mut counters: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for group in per_group {
        for (dist, hit) in group? {
            let c = counters.entry(dist).or_insert((0, 0));
            c.0 += u64::from(hit);
            c.1 += 1;
        }
    }
    Ok(report_from_counters(counters, params.dim(), seed, step))
}

/// Fixed-cutoff recall: fraction of pairs whose document ranks in the top
/// `k` for its query.
pub fn recall_at_k(params: &DualEncoderParams, pairs: &PairBatch, k: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "pairs",
            reason: "evaluation set is empty".to_string(),
        });
    }
    let (queries, docs) = params.scoring_tables()?;
    let groups = group_by_query(pairs, queries.count())?;
    let hits: Vec<Result<u64>> = groups
        .par_iter()
        .map(|(q, doc_ids)| {
            let retrieved: Vec<NodeId> = {
                let mut r = top_k(queries.column(*q as usize), &docs, k)?;
                r.sort_unstable();
                r
            };
            Ok(doc_ids
                .iter()
                .filter(|&&d| retrieved.binary_search(&d).is_ok())
                .count() as u64)
        })
        .collect();
    let mut hit_total = 0u64;
    for h in hits {
        hit_total += h?;
    }
    Ok(hit_total as f64 / pairs.len() as f64)
}

/// Trains one model per dimension on the template schedule and returns the
/// first dimension whose best checkpoint clears `threshold` overall recall
/// on a frozen regular-sampling evaluation set, or `None` when none does.
pub fn dimension_sweep(
    h: &Hierarchy,
    template: &[PhaseConfig],
    dims: &[usize],
    threshold: f64,
    eval_pairs: usize,
    seed: u64,
) -> Result<Option<usize>> {
    Ok(dimension_sweep_detailed(h, template, dims, threshold, eval_pairs, seed)?.0)
}

/// As [`dimension_sweep`], but also returning the best checkpoint of every
/// dimension trained before the search stopped, for sweep artifacts.
pub fn dimension_sweep_detailed(
    h: &Hierarchy,
    template: &[PhaseConfig],
    dims: &[usize],
    threshold: f64,
    eval_pairs: usize,
    seed: u64,
) -> Result<(Option<usize>, Vec<(usize, Checkpoint)>)> {
    if dims.is_empty() || dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "dims",
            reason: "need a strictly ascending, non-empty dimension list".to_string(),
        });
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            reason: format!("{threshold} outside [0, 1)"),
        });
    }
    let eval_set = sample_regular(h, eval_pairs, derive_seed(seed, "sweep/eval", 0))?;
    let mut results = Vec::with_capacity(dims.len());
    let mut found = None;
    for &dim in dims {
        let (best, _) = train(h, dim, template, &eval_set, derive_seed(seed, "sweep/train", dim as u64))?;
        let recall = best.validation_report.overall_recall;
        results.push((dim, best));
        if recall > threshold {
            found = Some(dim);
            break;
        }
    }
    Ok((found, results))
}

fn group_by_query(pairs: &PairBatch, node_count: usize) -> Result<Vec<(NodeId, Vec<NodeId>)>> {
    let mut groups: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (&q, &d) in pairs.queries.iter().zip(&pairs.documents) {
        for node in [q, d] {
            if node as usize >= node_count {
                return Err(Error::NodeOutOfRange {
                    node: node as usize,
                    count: node_count,
                });
            }
        }
        groups.entry(q).or_default().push(d);
    }
    Ok(groups.into_iter().collect())
}

fn report_from_counters(
    counters: BTreeMap<u32, (u64, u64)>,
    dimension: usize,
    seed: u64,
    step: Option<u64>,
) -> EvalReport {
    let mut per_distance = BTreeMap::new();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut min_slice: f64 = 1.0;
    for (dist, (h, t)) in counters {
        let recall = h as f64 / t as f64;
        per_distance.insert(dist, DistanceSlice { recall, pairs: t });
        hits += h;
        total += t;
        min_slice = min_slice.min(recall);
    }
    EvalReport {
        overall_recall: hits as f64 / total as f64,
        per_distance,
        min_slice_recall: min_slice,
        dimension,
        step,
        seed,
    }
}
