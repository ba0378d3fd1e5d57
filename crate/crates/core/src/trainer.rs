//! Lookup-table dual encoders and their training loop.
//!
//! Parameters are two unconstrained tables, one query and one document
//! column per node. Scores are inner products divided by a temperature.
//! The `normalize` flag switches to cosine scoring for comparison runs:
//! columns are L2-normalized at every use and the raw parameters absorb
//! the gradient through that normalization. Normalized scores live in
//! [-1/T, 1/T], so at the temperatures used here the softmax stays close
//! to uniform and training stalls; raw scoring is the default because it
//! is the convention under which the loss actually separates the tree.
//!
//! The loss over a batch of N pairs treats the batch's N document columns,
//! duplicates included, as the candidate set of every query in the batch:
//! each slot's cross entropy targets its own document against the other
//! N - 1. Gradients are analytic, exactly zero for columns the batch does
//! not touch, and the optimizer is plain SGD with heavy-ball momentum
//! applied densely, so velocity from touched columns keeps decaying after
//! contact.
//!
//! [`train`] runs a sequence of phases. Momentum restarts at each phase
//! boundary; the best checkpoint by validation metric, not the final state,
//! is carried from phase to phase and the best checkpoint of the final
//! phase is returned.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{recall_at_relevant, EvalReport};
use crate::hierarchy::{Hierarchy, NodeId};
use crate::sampler::{PairBatch, PairSampler, SamplingStrategy};
use crate::seed::rng_for;

const CKPT_MAGIC: &[u8; 8] = b"HRETCKP1";

/// Validation metric that picks the best checkpoint of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EarlyStopMetric {
    #[default]
    OverallRecall,
    /// Worst per-distance recall slice. Selects for balanced depth coverage,
    /// the quantity heavy-tail finetuning is meant to raise.
    MinSliceRecall,
}

/// One training phase: a sampling strategy plus optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub steps: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub strategy: SamplingStrategy,
    pub eval_every: u64,
    pub early_stop: EarlyStopMetric,
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(invalid("steps", "need at least one step"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid("learning_rate", "need a finite value >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum", "need a value in [0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(invalid("batch_size", "need at least one pair per batch"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(invalid("temperature", "need a finite value > 0"));
        }
        if self.eval_every < 1 {
            return Err(invalid("eval_every", "need a positive cadence"));
        }
        Ok(())
    }
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.to_string(),
    }
}

/// Query and document lookup tables plus the scoring convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoderParams {
    pub query_table: EmbeddingTable,
    pub doc_table: EmbeddingTable,
    /// Scores are cosines when set; raw inner products otherwise (default).
    pub normalize: bool,
}

impl DualEncoderParams {
    /// Seeded i.i.d. standard-normal initialization of both tables.
    pub fn init_gaussian(
        query_count: usize,
        doc_count: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut query_table = EmbeddingTable::zeros(dim, query_count)?;
        let mut doc_table = EmbeddingTable::zeros(dim, doc_count)?;
        for (table, label) in [
            (&mut query_table, "train/init-query"),
            (&mut doc_table, "train/init-doc"),
        ] {
            for j in 0..table.count() {
                let mut rng = rng_for(seed, label, j as u64);
                for v in table.column_mut(j) {
                    *v = rng.sample(StandardNormal);
                }
            }
        }
        Ok(Self {
            query_table,
            doc_table,
            normalize: false,
        })
    }

    pub fn from_tables(
        query_table: EmbeddingTable,
        doc_table: EmbeddingTable,
        normalize: bool,
    ) -> Result<Self> {
        if query_table.dim() != doc_table.dim() {
            return Err(Error::DimMismatch {
                left: query_table.dim(),
                right: doc_table.dim(),
            });
        }
        Ok(Self {
            query_table,
            doc_table,
            normalize,
        })
    }

    pub fn dim(&self) -> usize {
        self.query_table.dim()
    }

    /// The tables actually used for scoring: normalized copies under the
    /// cosine convention, plain copies otherwise.
    pub fn scoring_tables(&self) -> Result<(EmbeddingTable, EmbeddingTable)> {
        if self.normalize {
            Ok((
                self.query_table.normalized_copy()?,
                self.doc_table.normalized_copy()?,
            ))
        } else {
            Ok((self.query_table.clone(), self.doc_table.clone()))
        }
    }
}

/// Loss value and the per-column gradients of one batch. Only columns
/// referenced by the batch appear; entries are gradients with respect to the
/// raw (pre-normalization) parameters and are listed in ascending node
/// order.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub query: Vec<(NodeId, Vec<f64>)>,
    pub doc: Vec<(NodeId, Vec<f64>)>,
}

/// One side of a batch after dedup: the distinct nodes, each slot's position
/// in the distinct list, and the scoring vector of each distinct node
/// (normalized column or raw copy), with the raw norms kept for the
/// normalization pullback.
struct SideView {
    nodes: Vec<NodeId>,
    slot_of: Vec<usize>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
}

fn prepare_side(
    table: &EmbeddingTable,
    slots: &[NodeId],
    normalize: bool,
    table_name: &'static str,
) -> Result<SideView> {
    let dim = table.dim();
    let mut nodes: Vec<NodeId> = slots.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    for &n in &nodes {
        if (n as usize) >= table.count() {
            return Err(Error::NodeOutOfRange {
                node: n as usize,
                count: table.count(),
            });
        }
    }
    let slot_of = slots
        .iter()
        .map(|n| nodes.binary_search(n).expect("slot node was deduped"))
        .collect();

    let mut vectors = vec![0.0; nodes.len() * dim];
    let mut norms = vec![0.0; nodes.len()];
    for (i, &n) in nodes.iter().enumerate() {
        let col = table.column(n as usize);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParameter {
                table: table_name,
                column: n as usize,
            });
        }
        let dst = &mut vectors[i * dim..(i + 1) * dim];
        dst.copy_from_slice(col);
        if normalize {
            let norm = crate::embedding::column_norm(col);
            if norm == 0.0 {
                return Err(Error::ZeroNormColumn { column: n as usize });
            }
            for v in dst.iter_mut() {
                *v /= norm;
            }
            norms[i] = norm;
        } else {
            norms[i] = 1.0;
        }
    }
    Ok(SideView {
        nodes,
        slot_of,
        vectors,
        norms,
    })
}

/// Scores of every batch slot against every batch document, row-major
/// `N x N`, already divided by the temperature.
fn slot_scores(q: &SideView, d: &SideView, dim: usize, temperature: f64) -> Vec<f64> {
    let n = q.slot_of.len();
    let mut scores = vec![0.0; n * n];
    scores
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(k, row)| {
            let qv = &q.vectors[q.slot_of[k] * dim..(q.slot_of[k] + 1) * dim];
            for (l, out) in row.iter_mut().enumerate() {
                let dv = &d.vectors[d.slot_of[l] * dim..(d.slot_of[l] + 1) * dim];
                *out = dot(qv, dv) / temperature;
            }
        });
    scores
}

/// Mean cross entropy of the diagonal targets under a row-wise softmax.
fn mean_cross_entropy(scores: &[f64], n: usize) -> f64 {
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|k| {
            let row = &scores[k * n..(k + 1) * n];
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
            lse - row[k]
        })
        .sum();
    total / n as f64
}

/// In-batch softmax loss of one batch.
pub fn loss(params: &DualEncoderParams, batch: &PairBatch, temperature: f64) -> Result<f64> {
    let (q, d) = prepare_batch(params, batch, temperature)?;
    let scores = slot_scores(&q, &d, params.dim(), temperature);
    let value = mean_cross_entropy(&scores, batch.len());
    if !value.is_finite() {
        return Err(Error::NonFiniteValue { what: "loss" });
    }
    Ok(value)
}

fn prepare_batch(
    params: &DualEncoderParams,
    batch: &PairBatch,
    temperature: f64,
) -> Result<(SideView, SideView)> {
    if batch.is_empty() {
        return Err(invalid("batch", "batch is empty"));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(invalid("temperature", "need a finite value > 0"));
    }
    let q = prepare_side(&params.query_table, &batch.queries, params.normalize, "query")?;
    let d = prepare_side(&params.doc_table, &batch.documents, params.normalize, "doc")?;
    Ok((q, d))
}

/// Loss and analytic gradients of one batch with respect to the raw
/// parameters.
pub fn loss_gradients(
    params: &DualEncoderParams,
    batch: &PairBatch,
    temperature: f64,
) -> Result<BatchGradients> {
    let (q, d) = prepare_batch(params, batch, temperature)?;
    let dim = params.dim();
    let n = batch.len();
    let mut scores = slot_scores(&q, &d, dim, temperature);
    let loss_value = mean_cross_entropy(&scores, n);
    if !loss_value.is_finite() {
        return Err(Error::NonFiniteValue { what: "loss" });
    }

    // Overwrite scores with the cross-entropy coefficients
    // c[k][l] = (softmax(row k)[l] - [k == l]) / (N * T); the gradient of
    // the loss in score space.
    scores.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let denom: f64 = row.iter().map(|&s| (s - max).exp()).sum();
        for (l, v) in row.iter_mut().enumerate() {
            let p = (*v - max).exp() / denom;
            *v = (p - f64::from(u8::from(l == k))) / (n as f64 * temperature);
        }
    });
    let coeff = scores;

    // Slots sharing a node accumulate into one gradient row, computed per
    // distinct node so the parallel reduction order is fixed.
    let slots_by_node = |side: &SideView| -> Vec<Vec<usize>> {
        let mut by_node = vec![Vec::new(); side.nodes.len()];
        for (slot, &i) in side.slot_of.iter().enumerate() {
            by_node[i].push(slot);
        }
        by_node
    };

    let q_grads_scored: Vec<Vec<f64>> = slots_by_node(&q)
        .into_par_iter()
        .map(|slots| {
            let mut g = vec![0.0; dim];
            for k in slots {
                let row = &coeff[k * n..(k + 1) * n];
                for (l, &c) in row.iter().enumerate() {
                    let dv = &d.vectors[d.slot_of[l] * dim..(d.slot_of[l] + 1) * dim];
                    for (gi, vi) in g.iter_mut().zip(dv) {
                        *gi += c * vi;
                    }
                }
            }
            g
        })
        .collect();

    let d_grads_scored: Vec<Vec<f64>> = slots_by_node(&d)
        .into_par_iter()
        .map(|slots| {
            let mut g = vec![0.0; dim];
            for l in slots {
                for k in 0..n {
                    let c = coeff[k * n + l];
                    let qv = &q.vectors[q.slot_of[k] * dim..(q.slot_of[k] + 1) * dim];
                    for (gi, vi) in g.iter_mut().zip(qv) {
                        *gi += c * vi;
                    }
                }
            }
            g
        })
        .collect();

    let pull_back = |side: &SideView, grads: Vec<Vec<f64>>| -> Vec<(NodeId, Vec<f64>)> {
        side.nodes
            .iter()
            .zip(grads)
            .enumerate()
            .map(|(i, (&node, mut g))| {
                if params.normalize {
                    // d(theta/|theta|) maps g to (g - u (u.g)) / |theta|
                    // with u the unit column; the raw gradient is tangent
                    // to u.
                    let u = &side.vectors[i * dim..(i + 1) * dim];
                    let radial = dot(u, &g);
                    for (gi, ui) in g.iter_mut().zip(u) {
                        *gi = (*gi - radial * ui) / side.norms[i];
                    }
                }
                (node, g)
            })
            .collect()
    };

    Ok(BatchGradients {
        loss: loss_value,
        query: pull_back(&q, q_grads_scored),
        doc: pull_back(&d, d_grads_scored),
    })
}

/// Dense heavy-ball momentum state for both tables.
pub struct MomentumState {
    query: Vec<f64>,
    doc: Vec<f64>,
}

impl MomentumState {
    pub fn zeros_like(params: &DualEncoderParams) -> Self {
        Self {
            query: vec![0.0; params.query_table.values().len()],
            doc: vec![0.0; params.doc_table.values().len()],
        }
    }

    /// One optimizer step: `v <- momentum * v + g`, then a dense
    /// `theta <- theta - lr * v` over every column, so untouched columns
    /// keep moving while their velocity decays geometrically.
    pub fn apply(
        &mut self,
        params: &mut DualEncoderParams,
        grads: &BatchGradients,
        learning_rate: f64,
        momentum: f64,
    ) {
        let dim = params.dim();
        for (velocity, table, sparse) in [
            (&mut self.query, &mut params.query_table, &grads.query),
            (&mut self.doc, &mut params.doc_table, &grads.doc),
        ] {
            velocity.par_iter_mut().for_each(|v| *v *= momentum);
            for (node, g) in sparse.iter() {
                let dst = &mut velocity[*node as usize * dim..(*node as usize + 1) * dim];
                for (vi, gi) in dst.iter_mut().zip(g) {
                    *vi += gi;
                }
            }
            table
                .values_mut()
                .par_chunks_mut(4096)
                .zip(velocity.par_chunks(4096))
                .for_each(|(thetas, vs)| {
                    for (t, v) in thetas.iter_mut().zip(vs) {
                        *t -= learning_rate * v;
                    }
                });
        }
    }
}

/// A frozen copy of the parameters with the evaluation that selected it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: DualEncoderParams,
    pub step: u64,
    pub phase: usize,
    pub validation_report: EvalReport,
}

/// One logged evaluation: the mean batch loss since the previous log point
/// and the validation report at this step.
#[derive(Debug, Clone)]
pub struct HistoryPoint {
    pub step: u64,
    pub phase: usize,
    pub mean_loss: f64,
    pub report: EvalReport,
}

/// Trains a dual encoder through the phase schedule and returns the best
/// checkpoint of the final phase plus the full evaluation history. Steps are
/// numbered globally across phases. Every phase evaluates at its last step
/// even when the cadence does not divide the phase length, so each phase
/// selects a best checkpoint from at least one candidate.
pub fn train(
    h: &Hierarchy,
    dim: usize,
    phases: &[PhaseConfig],
    validation: &PairBatch,
    seed: u64,
) -> Result<(Checkpoint, Vec<HistoryPoint>)> {
    train_with_scoring(h, dim, phases, validation, seed, false)
}

/// [`train`] with the scoring convention exposed: `normalize = true` trains
/// and evaluates on cosines instead of raw inner products, the comparison
/// switch for documenting what normalization does to the learned geometry.
pub fn train_with_scoring(
    h: &Hierarchy,
    dim: usize,
    phases: &[PhaseConfig],
    validation: &PairBatch,
    seed: u64,
    normalize: bool,
) -> Result<(Checkpoint, Vec<HistoryPoint>)> {
    let m = h.node_count();
    let mut params = DualEncoderParams::init_gaussian(m, m, dim, seed)?;
    params.normalize = normalize;
    train_from(h, params, phases, validation, seed)
}

/// [`train`] from caller-supplied starting parameters instead of a fresh
/// initialization, so a run can resume from a stored checkpoint. The scoring
/// convention is taken from `params`; `seed` only drives evaluation.
pub fn train_from(
    h: &Hierarchy,
    params: DualEncoderParams,
    phases: &[PhaseConfig],
    validation: &PairBatch,
    seed: u64,
) -> Result<(Checkpoint, Vec<HistoryPoint>)> {
    if phases.is_empty() {
        return Err(invalid("phases", "need at least one phase"));
    }
    for phase in phases {
        phase.validate()?;
    }
    if params.query_table.count() < h.node_count() || params.doc_table.count() < h.node_count()
    {
        return Err(invalid(
            "params",
            "tables must cover every node of the hierarchy",
        ));
    }
    let mut params = params;
    let mut history = Vec::new();
    let mut global_step = 0u64;
    let mut final_best: Option<Checkpoint> = None;

    for (phase_idx, cfg) in phases.iter().enumerate() {
        let mut sampler = PairSampler::new(h, &cfg.strategy)?;
        let mut velocity = MomentumState::zeros_like(&params);
        let mut phase_best: Option<Checkpoint> = None;
        let mut window_loss = 0.0;
        let mut window_count = 0u64;

        for step_in_phase in 1..=cfg.steps {
            let batch = sampler.draw(cfg.batch_size);
            let grads = match loss_gradients(&params, &batch, cfg.temperature) {
                Ok(g) => g,
                Err(Error::NonFiniteValue { .. }) | Err(Error::NonFiniteParameter { .. }) => {
                    return Err(Error::NonFiniteLoss {
                        phase: phase_idx,
                        step: global_step + 1,
                    })
                }
                Err(e) => return Err(e),
            };
            velocity.apply(&mut params, &grads, cfg.learning_rate, cfg.momentum);
            global_step += 1;
            window_loss += grads.loss;
            window_count += 1;

            if step_in_phase % cfg.eval_every == 0 || step_in_phase == cfg.steps {
                let report = recall_at_relevant(&params, h, validation, seed, Some(global_step))?;
                let selected = |r: &EvalReport| match cfg.early_stop {
                    EarlyStopMetric::OverallRecall => r.overall_recall,
                    EarlyStopMetric::MinSliceRecall => r.min_slice_recall,
                };
                let improved = phase_best
                    .as_ref()
                    .map(|b: &Checkpoint| selected(&report) > selected(&b.validation_report))
                    .unwrap_or(true);
                history.push(HistoryPoint {
                    step: global_step,
                    phase: phase_idx,
                    mean_loss: window_loss / window_count as f64,
                    report: report.clone(),
                });
                window_loss = 0.0;
                window_count = 0;
                if improved {
                    phase_best = Some(Checkpoint {
                        params: params.clone(),
                        step: global_step,
                        phase: phase_idx,
                        validation_report: report,
                    });
                }
            }
        }

        let best = phase_best.expect("every phase evaluates at least once");
        params = best.params.clone();
        final_best = Some(best);
    }

    Ok((final_best.expect("at least one phase ran"), history))
}

/// A checkpoint read back from disk: tables plus the identifying metadata.
#[derive(Debug, Clone)]
pub struct StoredCheckpoint {
    pub params: DualEncoderParams,
    pub step: u64,
    pub phase: u64,
    pub seed: u64,
    pub config_hash: u64,
}

/// Writes a checkpoint: magic, metadata (step, phase, seed, config hash,
/// scoring convention), then the two tables in the embedding binary format.
pub fn write_checkpoint(
    mut w: impl Write,
    ckpt: &Checkpoint,
    seed: u64,
    config_hash: u64,
) -> Result<()> {
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&ckpt.step.to_le_bytes())?;
    w.write_all(&(ckpt.phase as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&config_hash.to_le_bytes())?;
    w.write_all(&[ckpt.params.normalize as u8])?;
    ckpt.params.query_table.write_binary(&mut w)?;
    ckpt.params.doc_table.write_binary(&mut w)?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<StoredCheckpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::BadMagic {
            expected: "HRETCKP1",
        });
    }
    let mut buf = [0u8; 8];
    let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    };
    let step = next_u64(&mut r)?;
    let phase = next_u64(&mut r)?;
    let seed = next_u64(&mut r)?;
    let config_hash = next_u64(&mut r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let query_table = EmbeddingTable::read_binary(&mut r)?;
    let doc_table = EmbeddingTable::read_binary(&mut r)?;
    let params = DualEncoderParams::from_tables(query_table, doc_table, flag[0] == 1)?;
    Ok(StoredCheckpoint {
        params,
        step,
        phase,
        seed,
        config_hash,
    })
}
