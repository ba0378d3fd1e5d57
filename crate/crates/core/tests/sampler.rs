//! Empirical distance distributions of every sampling strategy against
//! closed-form references, at the 0.001 chi-square significance level.

mod common;

use std::collections::BTreeMap;

use common::{chi_square, chi_square_critical_001};
use hiret_core::hierarchy::{synth, Hierarchy, TreeSpec};
use hiret_core::sampler::{
    distance_histogram, sample_heavy_tail_bucket, sample_heavy_tail_proportional,
    sample_rebalanced, sample_regular, HeavyTailKind, PairBatch, PairSampler, SamplingStrategy,
    StrategyKind,
};
use hiret_core::seed::rng_for;

fn toy_tree() -> Hierarchy {
    Hierarchy::perfect_tree(TreeSpec { height: 4, width: 5 }).unwrap()
}

/// Three-node chain a -> b -> c as ids 0 -> 1 -> 2.
fn chain3() -> Hierarchy {
    Hierarchy::from_edges(3, None, vec![(0, 1), (1, 2)], None).unwrap()
}

/// Observed counts over the exact support `dists`, failing on any distance
/// outside it.
fn counts_on(h: &Hierarchy, batch: &PairBatch, dists: &[u32]) -> Vec<u64> {
    let hist = distance_histogram(h, batch).unwrap();
    for d in hist.keys() {
        assert!(dists.contains(d), "unexpected distance {d} in {hist:?}");
    }
    dists.iter().map(|d| *hist.get(d).unwrap_or(&0)).collect()
}

fn assert_fits(observed: &[u64], probabilities: &[f64], n: u64, what: &str) {
    let expected: Vec<f64> = probabilities.iter().map(|p| p * n as f64).collect();
    let stat = chi_square(observed, &expected);
    let critical = chi_square_critical_001(observed.len() - 1);
    assert!(
        stat < critical,
        "{what}: chi-square {stat:.2} >= {critical} (observed {observed:?}, expected {expected:?})"
    );
}

const N: usize = 100_000;

#[test]
fn regular_matches_the_closed_form_on_the_toy_tree() {
    // Uniform query over 155 nodes, uniform document in the relevant set:
    // P(d) = (levels with >= d+1 members weighted by 1/|S|) = 71/186,
    // 65/186, 50/186 for d = 0, 1, 2.
    let h = toy_tree();
    let batch = sample_regular(&h, N, 1001).unwrap();
    let counts = counts_on(&h, &batch, &[0, 1, 2]);
    assert_fits(&counts, &[71.0 / 186.0, 65.0 / 186.0, 50.0 / 186.0], N as u64, "toy regular");
    // The headline percentages: 38 / 35 / 27, each within one point.
    for (c, pct) in counts.iter().zip([38.0, 35.0, 27.0]) {
        let share = 100.0 * *c as f64 / N as f64;
        assert!((share - pct).abs() <= 1.0, "share {share:.2} vs {pct}");
    }
}

#[test]
fn regular_matches_the_closed_form_on_a_chain() {
    let h = chain3();
    let batch = sample_regular(&h, N, 1002).unwrap();
    let counts = counts_on(&h, &batch, &[0, 1, 2]);
    assert_fits(
        &counts,
        &[11.0 / 18.0, 5.0 / 18.0, 2.0 / 18.0],
        N as u64,
        "chain regular",
    );
}

#[test]
fn bucket_heavy_tail_splits_evenly_across_distance_buckets() {
    // The bucket sampler draws the target distance first, uniformly over
    // the global bucket range, so both the toy tree and the chain land on
    // exactly half-and-half over distances {1, 2} and never emit 0.
    let h = toy_tree();
    let batch = sample_heavy_tail_bucket(&h, N, 1003).unwrap();
    let counts = counts_on(&h, &batch, &[1, 2]);
    assert_fits(&counts, &[0.5, 0.5], N as u64, "toy bucket");

    let c = chain3();
    let batch = sample_heavy_tail_bucket(&c, N, 1004).unwrap();
    let counts = counts_on(&c, &batch, &[1, 2]);
    assert_fits(&counts, &[0.5, 0.5], N as u64, "chain bucket");
}

#[test]
fn proportional_heavy_tail_weights_documents_by_distance() {
    // Query uniform over the 150 non-leaf-free nodes; within a level-3
    // query the parent/grandparent split is 1/3 : 2/3, which aggregates to
    // 4/9 : 5/9 over distances {1, 2}.
    let h = toy_tree();
    let batch = sample_heavy_tail_proportional(&h, N, 1005).unwrap();
    let counts = counts_on(&h, &batch, &[1, 2]);
    assert_fits(&counts, &[4.0 / 9.0, 5.0 / 9.0], N as u64, "toy proportional");
}

#[test]
fn proportional_conditional_split_on_the_chain_head() {
    // Conditioned on query a of a -> b -> c, documents b and c carry
    // weights 1 and 2.
    let h = chain3();
    let batch = sample_heavy_tail_proportional(&h, N, 1006).unwrap();
    let mut doc_counts = BTreeMap::new();
    for (q, d) in batch.queries.iter().zip(&batch.documents) {
        if *q == 0 {
            *doc_counts.entry(*d).or_insert(0u64) += 1;
        }
    }
    let from_a: u64 = doc_counts.values().sum();
    assert!(from_a > 0);
    let observed = [doc_counts[&1], doc_counts[&2]];
    assert_fits(&observed, &[1.0 / 3.0, 2.0 / 3.0], from_a, "chain head split");

    // Marginally over both queries: distance 1 from (a,b) and (b,c),
    // distance 2 from (a,c), totalling 2/3 : 1/3.
    let counts = counts_on(&h, &batch, &[1, 2]);
    assert_fits(&counts, &[2.0 / 3.0, 1.0 / 3.0], N as u64, "chain proportional");
}

#[test]
fn rebalanced_mixture_matches_the_blended_distribution() {
    let h = toy_tree();
    let batch = sample_rebalanced(&h, N, 0.5, HeavyTailKind::Bucket, 1007).unwrap();
    let counts = counts_on(&h, &batch, &[0, 1, 2]);
    let blend: Vec<f64> = [71.0 / 186.0, 65.0 / 186.0, 50.0 / 186.0]
        .iter()
        .zip([0.0, 0.5, 0.5])
        .map(|(r, b)| 0.5 * r + 0.5 * b)
        .collect();
    assert_fits(&counts, &blend, N as u64, "rebalanced p=0.5");

    // At p = 0.03 the distance-0 share collapses to 0.03 * 38.2% = 1.1%.
    let batch = sample_rebalanced(&h, N, 0.03, HeavyTailKind::Bucket, 1008).unwrap();
    let share = counts_on(&h, &batch, &[0, 1, 2])[0] as f64 / N as f64;
    assert!(
        (share - 0.03 * 71.0 / 186.0).abs() <= 0.003,
        "distance-0 share {share:.4}"
    );
}

#[test]
fn mixture_endpoints_collapse_to_the_pure_strategies() {
    let h = toy_tree();
    let all_regular = sample_rebalanced(&h, N, 1.0, HeavyTailKind::Bucket, 1009).unwrap();
    let counts = counts_on(&h, &all_regular, &[0, 1, 2]);
    assert_fits(&counts, &[71.0 / 186.0, 65.0 / 186.0, 50.0 / 186.0], N as u64, "p=1");

    let all_heavy = sample_rebalanced(&h, N, 0.0, HeavyTailKind::Bucket, 1010).unwrap();
    let counts = counts_on(&h, &all_heavy, &[1, 2]);
    assert_eq!(counts.iter().sum::<u64>(), N as u64, "p=0 emitted distance 0");
    assert_fits(&counts, &[0.5, 0.5], N as u64, "p=0");
}

#[test]
fn every_strategy_emits_only_relevant_pairs() {
    let mut rng = rng_for(51, "test/sampler-valid", 0);
    let dag = synth::random_dag(120, 360, &mut rng).unwrap();
    for (i, kind) in [
        StrategyKind::Regular,
        StrategyKind::HeavyTail(HeavyTailKind::Bucket),
        StrategyKind::HeavyTail(HeavyTailKind::Proportional),
        StrategyKind::Rebalanced {
            mix_p: 0.25,
            heavy: HeavyTailKind::Bucket,
        },
    ]
    .into_iter()
    .enumerate()
    {
        let strategy = SamplingStrategy { kind, seed: 2000 + i as u64 };
        let mut sampler = PairSampler::new(&dag, &strategy).unwrap();
        let batch = sampler.draw(5_000);
        batch.validate_against(&dag).unwrap();
    }
}

#[test]
fn sampler_stream_matches_the_free_functions() {
    let h = toy_tree();
    let cases: [(StrategyKind, PairBatch); 4] = [
        (StrategyKind::Regular, sample_regular(&h, 500, 3001).unwrap()),
        (
            StrategyKind::HeavyTail(HeavyTailKind::Bucket),
            sample_heavy_tail_bucket(&h, 500, 3001).unwrap(),
        ),
        (
            StrategyKind::HeavyTail(HeavyTailKind::Proportional),
            sample_heavy_tail_proportional(&h, 500, 3001).unwrap(),
        ),
        (
            StrategyKind::Rebalanced {
                mix_p: 0.4,
                heavy: HeavyTailKind::Proportional,
            },
            sample_rebalanced(&h, 500, 0.4, HeavyTailKind::Proportional, 3001).unwrap(),
        ),
    ];
    for (kind, expected) in cases {
        let mut sampler = PairSampler::new(&h, &SamplingStrategy { kind, seed: 3001 }).unwrap();
        let got = sampler.draw(500);
        assert_eq!(got.queries, expected.queries);
        assert_eq!(got.documents, expected.documents);
    }
}
