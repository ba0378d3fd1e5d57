//! Directed-acyclic hierarchies over a document universe.
//!
//! A [`Hierarchy`] stores a DAG whose edges point from a node to its parent
//! (more general) node, together with the precomputed reachable set of every
//! node. The reachable set of `u`, including `u` itself, is the relevant set
//! for the query whose exact match is `u`; the shortest directed-path length
//! from `u` to a reachable `v` is the pair's hierarchy distance.
//!
//! An optional distance cap shrinks relevant sets to nodes within the cap.
//! Distances themselves are always answered pre-cap, so a capped hierarchy
//! still reports the true path length between any reachable pair.
//!
//! Construction is single-threaded; a built hierarchy is immutable and safe
//! to share across threads.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::seed::{fnv1a_extend, FNV_SEED};

/// Dense node index. Tables and batches store these; `node_count` bounds them.
pub type NodeId = u32;

/// Reachable nodes of one source, sorted by node id, with parallel distances.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Reach {
    nodes: Vec<NodeId>,
    dists: Vec<u32>,
}

/// Borrowed view of one node's relevant set.
#[derive(Debug, Clone, Copy)]
pub struct RelevantSet<'a> {
    nodes: &'a [NodeId],
    dists: &'a [u32],
}

impl<'a> RelevantSet<'a> {
    /// Member nodes in ascending id order. Always contains the source itself.
    pub fn nodes(&self) -> &'a [NodeId] {
        self.nodes
    }

    /// Distances parallel to [`Self::nodes`].
    pub fn distances(&self) -> &'a [u32] {
        self.dists
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Distance to `v`, or `None` when `v` is not in the set.
    pub fn distance_to(&self, v: NodeId) -> Option<u32> {
        self.nodes.binary_search(&v).ok().map(|i| self.dists[i])
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.binary_search(&v).is_ok()
    }

    /// Largest distance in the set; 0 when the set is only the source.
    pub fn max_distance(&self) -> u32 {
        self.dists.iter().copied().max().unwrap_or(0)
    }
}

/// A DAG over `node_count` documents with precomputed relevant sets.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    node_count: usize,
    labels: Option<Vec<String>>,
    /// Deduplicated (child, parent) pairs, sorted.
    edges: Vec<(NodeId, NodeId)>,
    cap: Option<u32>,
    /// Full reachability closure, ignoring the cap.
    reach: Vec<Reach>,
    /// Capped view; only present when a cap actually applies.
    capped: Option<Vec<Reach>>,
    max_relevant: usize,
    max_distance: u32,
}

/// Shape of a synthetic perfect tree: `height` levels including the root,
/// `width` children per internal node. The root itself is not part of the
/// document universe, so the node count is `width + width^2 + ...` down to
/// the leaf level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeSpec {
    pub height: u32,
    pub width: u32,
}

impl Hierarchy {
    /// Builds a hierarchy from raw parts, validating indices and acyclicity.
    /// Duplicate edges are dropped; a self-loop is reported as a cycle.
    pub fn from_edges(
        node_count: usize,
        labels: Option<Vec<String>>,
        edges: Vec<(NodeId, NodeId)>,
        cap: Option<u32>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::EmptyHierarchy);
        }
        if node_count > u32::MAX as usize {
            return Err(Error::InvalidParameter {
                name: "node_count",
                reason: format!("{node_count} exceeds the u32 index space"),
            });
        }
        if let Some(l) = &labels {
            if l.len() != node_count {
                return Err(Error::InvalidParameter {
                    name: "node_labels",
                    reason: format!("{} labels for {} nodes", l.len(), node_count),
                });
            }
        }
        let name_of = |u: NodeId| -> String {
            match &labels {
                Some(l) => l[u as usize].clone(),
                None => u.to_string(),
            }
        };

        let mut edges = edges;
        for &(c, p) in &edges {
            for node in [c, p] {
                if node as usize >= node_count {
                    return Err(Error::NodeOutOfRange {
                        node: node as usize,
                        count: node_count,
                    });
                }
            }
            if c == p {
                return Err(Error::CycleDetected { node: name_of(c) });
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut parents = vec![Vec::new(); node_count];
        let mut indegree = vec![0usize; node_count];
        for &(c, p) in &edges {
            parents[c as usize].push(p);
            indegree[p as usize] += 1;
        }

        // Kahn's algorithm; any node left with positive in-degree sits on or
        // downstream of a cycle, and the smallest-indexed one with a cyclic
        // successor is reported.
        let mut queue: Vec<NodeId> = (0..node_count as NodeId)
            .filter(|&u| indegree[u as usize] == 0)
            .collect();
        let mut processed = 0usize;
        while let Some(u) = queue.pop() {
            processed += 1;
            for &p in &parents[u as usize] {
                indegree[p as usize] -= 1;
                if indegree[p as usize] == 0 {
                    queue.push(p);
                }
            }
        }
        if processed < node_count {
            let culprit = (0..node_count)
                .find(|&u| indegree[u] > 0)
                .expect("unprocessed node must have positive in-degree");
            return Err(Error::CycleDetected {
                node: name_of(culprit as NodeId),
            });
        }

        let reach = compute_closure(node_count, &parents);
        let capped = match cap {
            Some(c) => {
                let needs_filter = reach.iter().any(|r| r.dists.iter().any(|&d| d > c));
                needs_filter.then(|| {
                    reach
                        .iter()
                        .map(|r| {
                            let mut nodes = Vec::new();
                            let mut dists = Vec::new();
                            for (&v, &d) in r.nodes.iter().zip(&r.dists) {
                                if d <= c {
                                    nodes.push(v);
                                    dists.push(d);
                                }
                            }
                            Reach { nodes, dists }
                        })
                        .collect::<Vec<_>>()
                })
            }
            None => None,
        };

        let effective = capped.as_deref().unwrap_or(&reach);
        let max_relevant = effective.iter().map(|r| r.nodes.len()).max().unwrap_or(1);
        let max_distance = effective
            .iter()
            .filter_map(|r| r.dists.iter().copied().max())
            .max()
            .unwrap_or(0);

        Ok(Self {
            node_count,
            labels,
            edges,
            cap,
            reach,
            capped,
            max_relevant,
            max_distance,
        })
    }

    /// Generates the perfect (height, width) tree with the root dropped from
    /// the universe: level-1 nodes (the root's children) come first and have
    /// no outgoing edge, and a node at level `l` has a relevant set of size
    /// `l`, namely itself and its `l - 1` ancestors below the root.
    pub fn perfect_tree(spec: TreeSpec) -> Result<Self> {
        if spec.height < 2 {
            return Err(Error::InvalidParameter {
                name: "height",
                reason: format!("{} leaves the universe empty; need >= 2", spec.height),
            });
        }
        if spec.width < 1 {
            return Err(Error::InvalidParameter {
                name: "width",
                reason: "need >= 1 child per internal node".to_string(),
            });
        }

        let w = spec.width as usize;
        let levels = (spec.height - 1) as usize;
        let mut level_sizes = Vec::with_capacity(levels);
        let mut size = 1usize;
        let mut total = 0usize;
        for _ in 0..levels {
            size = size.checked_mul(w).ok_or_else(too_many_nodes)?;
            total = total.checked_add(size).ok_or_else(too_many_nodes)?;
            if total > MAX_TREE_NODES {
                return Err(too_many_nodes());
            }
            level_sizes.push(size);
        }

        let mut labels = Vec::with_capacity(total);
        let mut edges = Vec::with_capacity(total.saturating_sub(level_sizes[0]));
        let mut level_start = vec![0usize; levels];
        for l in 1..levels {
            level_start[l] = level_start[l - 1] + level_sizes[l - 1];
        }
        for l in 0..levels {
            for j in 0..level_sizes[l] {
                let idx = level_start[l] + j;
                if l == 0 {
                    labels.push(format!("{}", j + 1));
                } else {
                    let parent = level_start[l - 1] + j / w;
                    labels.push(format!("{}.{}", labels[parent], j % w + 1));
                    edges.push((idx as NodeId, parent as NodeId));
                }
            }
        }

        Self::from_edges(total, Some(labels), edges, None)
    }

    /// Parses a TAB-separated edge list (`child<TAB>parent` labels, one edge
    /// per line, `#` comments and blank lines skipped) and assigns dense
    /// indices in first-appearance order.
    pub fn load_edge_list(reader: impl BufRead, cap: Option<u32>) -> Result<Self> {
        let mut index: HashMap<String, NodeId> = HashMap::new();
        let mut labels: Vec<String> = Vec::new();
        let mut edges: Vec<(NodeId, NodeId)> = Vec::new();

        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (child, parent) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(p), None) => (c, p),
                (_, None, _) => {
                    return Err(Error::MalformedLine {
                        line: lineno,
                        reason: "expected child<TAB>parent".to_string(),
                    })
                }
                _ => {
                    return Err(Error::MalformedLine {
                        line: lineno,
                        reason: "more than one TAB".to_string(),
                    })
                }
            };
            if child.is_empty() || parent.is_empty() {
                return Err(Error::MalformedLine {
                    line: lineno,
                    reason: "empty label".to_string(),
                });
            }
            let mut intern = |label: &str| -> NodeId {
                *index.entry(label.to_string()).or_insert_with(|| {
                    labels.push(label.to_string());
                    (labels.len() - 1) as NodeId
                })
            };
            let c = intern(child);
            let p = intern(parent);
            edges.push((c, p));
        }

        if labels.is_empty() {
            return Err(Error::EmptyHierarchy);
        }
        Self::from_edges(labels.len(), Some(labels), edges, cap)
    }

    /// Writes the edge list in the format [`Self::load_edge_list`] accepts.
    /// Unlabeled hierarchies use the node index as its label. Nodes without
    /// any incident edge do not appear and cannot round-trip.
    pub fn save_edge_list(&self, mut writer: impl Write) -> Result<()> {
        for &(c, p) in &self.edges {
            writeln!(writer, "{}\t{}", self.label_of(c), self.label_of(p))?;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Deduplicated (child, parent) pairs in sorted order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of `u`, or its index rendered as text when unlabeled.
    pub fn label_of(&self, u: NodeId) -> String {
        match &self.labels {
            Some(l) => l[u as usize].clone(),
            None => u.to_string(),
        }
    }

    pub fn distance_cap(&self) -> Option<u32> {
        self.cap
    }

    /// The relevant set of `u` under the cap.
    pub fn relevant_set(&self, u: NodeId) -> RelevantSet<'_> {
        let r = match &self.capped {
            Some(c) => &c[u as usize],
            None => &self.reach[u as usize],
        };
        RelevantSet {
            nodes: &r.nodes,
            dists: &r.dists,
        }
    }

    /// Largest relevant-set size over all nodes (the `s` of the separation
    /// bound), under the cap.
    pub fn max_relevant_size(&self) -> usize {
        self.max_relevant
    }

    /// Largest pair distance present in any capped relevant set.
    pub fn max_distance(&self) -> u32 {
        self.max_distance
    }

    /// Shortest directed-path length from `u` to `v`, ignoring the cap;
    /// `None` when `v` is unreachable from `u`.
    pub fn distance(&self, u: NodeId, v: NodeId) -> Result<Option<u32>> {
        for node in [u, v] {
            if node as usize >= self.node_count {
                return Err(Error::NodeOutOfRange {
                    node: node as usize,
                    count: self.node_count,
                });
            }
        }
        let r = &self.reach[u as usize];
        Ok(r.nodes.binary_search(&v).ok().map(|i| r.dists[i]))
    }

    /// Structural fingerprint covering node count, edges, cap, and labels.
    pub fn content_hash(&self) -> u64 {
        let mut h = fnv1a_extend(FNV_SEED, &(self.node_count as u64).to_le_bytes());
        for &(c, p) in &self.edges {
            h = fnv1a_extend(h, &c.to_le_bytes());
            h = fnv1a_extend(h, &p.to_le_bytes());
        }
        h = fnv1a_extend(h, &[self.cap.is_some() as u8]);
        if let Some(c) = self.cap {
            h = fnv1a_extend(h, &c.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for l in labels {
                h = fnv1a_extend(h, l.as_bytes());
                h = fnv1a_extend(h, &[0]);
            }
        }
        h
    }
}

const MAX_TREE_NODES: usize = 50_000_000;

fn too_many_nodes() -> Error {
    Error::InvalidParameter {
        name: "tree_spec",
        reason: format!("node count exceeds the supported maximum {MAX_TREE_NODES}"),
    }
}

/// Per-node BFS over the parent adjacency. A generation stamp avoids
/// clearing the visited array between sources.
fn compute_closure(node_count: usize, parents: &[Vec<NodeId>]) -> Vec<Reach> {
    let mut stamp = vec![0u32; node_count];
    let mut generation = 0u32;
    let mut queue: Vec<(NodeId, u32)> = Vec::new();
    let mut out = Vec::with_capacity(node_count);

    for u in 0..node_count as NodeId {
        generation += 1;
        queue.clear();
        queue.push((u, 0));
        stamp[u as usize] = generation;
        let mut head = 0;
        let mut nodes = Vec::new();
        let mut dists = Vec::new();
        while head < queue.len() {
            let (v, d) = queue[head];
            head += 1;
            nodes.push(v);
            dists.push(d);
            for &p in &parents[v as usize] {
                if stamp[p as usize] != generation {
                    stamp[p as usize] = generation;
                    queue.push((p, d + 1));
                }
            }
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_unstable_by_key(|&i| nodes[i]);
        out.push(Reach {
            nodes: order.iter().map(|&i| nodes[i]).collect(),
            dists: order.iter().map(|&i| dists[i]).collect(),
        });
    }
    out
}

/// Random structure generators for tests and scaled-down experiments.
pub mod synth {
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use super::{Hierarchy, NodeId};
    use crate::error::Result;

    /// Random DAG on `m` nodes: a random permutation fixes a topological
    /// order and every edge points forward in it (child earlier, parent
    /// later), so the result is acyclic by construction.
    pub fn random_dag(m: usize, edge_count: usize, rng: &mut ChaCha8Rng) -> Result<Hierarchy> {
        let mut order: Vec<NodeId> = (0..m as NodeId).collect();
        order.shuffle(rng);
        let mut edges = Vec::with_capacity(edge_count);
        if m >= 2 {
            for _ in 0..edge_count {
                let i = rng.random_range(0..m - 1);
                let j = rng.random_range(i + 1..m);
                edges.push((order[i], order[j]));
            }
        }
        Hierarchy::from_edges(m, None, edges, None)
    }

    /// Random tree on `m` nodes whose depth never exceeds `max_depth`:
    /// node 0 is the root and every later node attaches uniformly to an
    /// earlier node of depth below the bound. Relevant sets have size at
    /// most `max_depth + 1`.
    pub fn random_tree_bounded_depth(
        m: usize,
        max_depth: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Hierarchy> {
        let mut depth = vec![0u32; m];
        let mut shallow: Vec<NodeId> = vec![0];
        let mut edges = Vec::with_capacity(m.saturating_sub(1));
        for u in 1..m as NodeId {
            let parent = shallow[rng.random_range(0..shallow.len())];
            depth[u as usize] = depth[parent as usize] + 1;
            edges.push((u, parent));
            if depth[u as usize] < max_depth {
                shallow.push(u);
            }
        }
        Hierarchy::from_edges(m, None, edges, None)
    }

    /// Extracts an ancestor-closed random sub-hierarchy of roughly
    /// `target_size` nodes: full reachable sets of uniformly drawn nodes are
    /// added until the target is reached, which may overshoot by at most one
    /// set. Because every selected node keeps its entire ancestor closure,
    /// relevant sets and distances of selected nodes are preserved exactly.
    /// Returns the sub-hierarchy and the original id of each new node.
    pub fn closed_subhierarchy(
        h: &Hierarchy,
        target_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Hierarchy, Vec<NodeId>)> {
        let m = h.node_count();
        let target = target_size.min(m);
        let mut selected = vec![false; m];
        let mut count = 0usize;
        while count < target {
            let u = rng.random_range(0..m) as NodeId;
            for &v in h.reach[u as usize].nodes.iter() {
                if !selected[v as usize] {
                    selected[v as usize] = true;
                    count += 1;
                }
            }
        }

        let mut old_of_new = Vec::with_capacity(count);
        let mut new_of_old = vec![NodeId::MAX; m];
        for (old, &sel) in selected.iter().enumerate() {
            if sel {
                new_of_old[old] = old_of_new.len() as NodeId;
                old_of_new.push(old as NodeId);
            }
        }

        let edges = h
            .edges
            .iter()
            .filter(|(c, p)| selected[*c as usize] && selected[*p as usize])
            .map(|&(c, p)| (new_of_old[c as usize], new_of_old[p as usize]))
            .collect();
        let labels = h
            .labels
            .as_ref()
            .map(|l| old_of_new.iter().map(|&o| l[o as usize].clone()).collect());

        let sub = Hierarchy::from_edges(count, labels, edges, h.cap)?;
        Ok((sub, old_of_new))
    }
}
