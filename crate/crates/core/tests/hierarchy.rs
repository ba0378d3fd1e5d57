//! Reachability correctness against a textbook BFS oracle plus structural
//! checks of the synthetic generators and the edge-list format.

mod common;

use std::collections::{HashMap, VecDeque};

use hiret_core::error::Error;
use hiret_core::hierarchy::{synth, Hierarchy, NodeId, TreeSpec};
use hiret_core::seed::rng_for;

/// Shortest-path distances from `u` over child-to-parent edges, computed by
/// plain breadth-first search on an adjacency list.
fn bfs_distances(m: usize, edges: &[(NodeId, NodeId)], u: NodeId) -> HashMap<NodeId, u32> {
    let mut adjacency = vec![Vec::new(); m];
    for &(c, p) in edges {
        adjacency[c as usize].push(p);
    }
    let mut dist = HashMap::new();
    dist.insert(u, 0);
    let mut queue = VecDeque::from([u]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for &w in &adjacency[v as usize] {
            dist.entry(w).or_insert_with(|| {
                queue.push_back(w);
                d + 1
            });
        }
    }
    dist
}

#[test]
fn closure_matches_bfs_oracle_on_random_dags() {
    let mut rng = rng_for(11, "test/hierarchy-oracle", 0);
    for trial in 0..30u64 {
        let m = 2 + (trial as usize * 7) % 119;
        let h = synth::random_dag(m, 3 * m, &mut rng).unwrap();
        for u in 0..m as NodeId {
            let oracle = bfs_distances(m, h.edges(), u);
            let set = h.relevant_set(u);
            assert_eq!(set.len(), oracle.len(), "m={m} u={u}");
            for (&v, &d) in set.nodes().iter().zip(set.distances()) {
                assert_eq!(oracle.get(&v), Some(&d), "m={m} u={u} v={v}");
            }
        }
    }
}

#[test]
fn distance_cap_keeps_exactly_the_near_members() {
    let mut rng = rng_for(12, "test/hierarchy-cap", 0);
    let base = synth::random_dag(80, 200, &mut rng).unwrap();
    let capped = Hierarchy::from_edges(80, None, base.edges().to_vec(), Some(2)).unwrap();
    for u in 0..80 {
        let oracle = bfs_distances(80, base.edges(), u);
        let set = capped.relevant_set(u);
        let mut expected: Vec<NodeId> = oracle
            .iter()
            .filter(|(_, &d)| d <= 2)
            .map(|(&v, _)| v)
            .collect();
        expected.sort_unstable();
        assert_eq!(set.nodes(), expected.as_slice(), "u={u}");
        // The uncapped distance query is unaffected by the cap.
        for (&v, &d) in oracle.iter() {
            assert_eq!(capped.distance(u, v).unwrap(), Some(d));
        }
    }
}

#[test]
fn perfect_tree_shapes_match_closed_forms() {
    // Height H, width W: W + W^2 + ... + W^(H-1) nodes below the root, a
    // node at level l has l relevant documents, and the deepest pair sits
    // at distance H - 2.
    let cases = [
        (TreeSpec { height: 2, width: 3 }, 3usize, 1usize, 0u32),
        (TreeSpec { height: 3, width: 2 }, 6, 2, 1),
        (TreeSpec { height: 4, width: 5 }, 155, 3, 2),
    ];
    for (spec, nodes, max_set, max_dist) in cases {
        let h = Hierarchy::perfect_tree(spec).unwrap();
        assert_eq!(h.node_count(), nodes);
        assert_eq!(h.max_relevant_size(), max_set);
        assert_eq!(h.max_distance(), max_dist);
        for u in 0..h.node_count() as NodeId {
            let set = h.relevant_set(u);
            assert!(set.contains(u));
            assert_eq!(set.distance_to(u), Some(0));
        }
    }

    // In the H=4, W=5 tree the first 5 ids are the root's children with
    // singleton relevant sets; the last 125 are leaves seeing 3 documents.
    let h = Hierarchy::perfect_tree(TreeSpec { height: 4, width: 5 }).unwrap();
    for u in 0..5 {
        assert_eq!(h.relevant_set(u).len(), 1);
    }
    for u in 30..155 {
        assert_eq!(h.relevant_set(u).len(), 3);
    }
}

#[test]
fn a_back_edge_turns_the_dag_into_a_rejected_cycle() {
    let mut rng = rng_for(13, "test/hierarchy-cycle", 0);
    let h = synth::random_dag(40, 100, &mut rng).unwrap();
    // Any reversed existing edge closes a directed 2-cycle.
    let &(c, p) = h.edges().first().expect("random DAG has edges");
    let mut edges = h.edges().to_vec();
    edges.push((p, c));
    match Hierarchy::from_edges(40, None, edges, None) {
        Err(Error::CycleDetected { .. }) => {}
        other => panic!("expected cycle rejection, got {other:?}"),
    }
}

#[test]
fn edge_list_round_trip_preserves_structure_by_label() {
    let mut rng = rng_for(14, "test/hierarchy-roundtrip", 0);
    let h = synth::random_dag(60, 150, &mut rng).unwrap();
    let mut buf = Vec::new();
    h.save_edge_list(&mut buf).unwrap();
    let reloaded = Hierarchy::load_edge_list(buf.as_slice(), None).unwrap();

    // Ids may be permuted by first-appearance order; labels identify nodes.
    let labels = reloaded.labels().expect("round trip keeps labels");
    let id_by_label: HashMap<&str, NodeId> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as NodeId))
        .collect();
    // Nodes without edges are dropped by the text format; every surviving
    // label's relevant set must match the original node's set exactly.
    for (new_u, label) in labels.iter().enumerate() {
        let old_u: NodeId = label.parse().unwrap();
        let old_set = h.relevant_set(old_u);
        let new_set = reloaded.relevant_set(new_u as NodeId);
        assert_eq!(old_set.len(), new_set.len());
        for (&old_v, &d) in old_set.nodes().iter().zip(old_set.distances()) {
            let new_v = id_by_label[h.label_of(old_v).as_str()];
            assert_eq!(new_set.distance_to(new_v), Some(d));
        }
    }
}

#[test]
fn closed_subhierarchy_preserves_sets_and_distances() {
    let mut rng = rng_for(15, "test/hierarchy-sub", 0);
    let h = synth::random_dag(300, 900, &mut rng).unwrap();
    let (sub, old_of_new) = synth::closed_subhierarchy(&h, 80, &mut rng).unwrap();
    assert!(sub.node_count() >= 80);
    assert_eq!(old_of_new.len(), sub.node_count());
    for new_u in 0..sub.node_count() as NodeId {
        let old_u = old_of_new[new_u as usize];
        let sub_set = sub.relevant_set(new_u);
        let old_set = h.relevant_set(old_u);
        assert_eq!(sub_set.len(), old_set.len(), "new={new_u} old={old_u}");
        for (&new_v, &d) in sub_set.nodes().iter().zip(sub_set.distances()) {
            assert_eq!(old_set.distance_to(old_of_new[new_v as usize]), Some(d));
        }
    }
}

#[test]
fn bounded_depth_trees_respect_the_bound() {
    let mut rng = rng_for(16, "test/hierarchy-depth", 0);
    for _ in 0..10 {
        let h = synth::random_tree_bounded_depth(200, 3, &mut rng).unwrap();
        assert!(h.max_distance() <= 3);
        assert!(h.max_relevant_size() <= 4);
        // A tree has exactly one parent per non-root node.
        assert_eq!(h.edges().len(), 199);
    }
}
