//! Exhaustive enumeration of small search spaces and single-node expansion
//! for extrapolation.

use std::collections::{BTreeMap, BTreeSet};

use super::canon::{canonicalize, canonicalize_parts};
use super::{ArchGraph, GraphError};
use crate::space::{LabelMode, SearchSpaceSpec};

/// Work cap on raw (pre-filter) candidates per node count.
const RAW_CANDIDATE_LIMIT: u128 = 1 << 26;

/// Yields every canonical, valid, pairwise non-isomorphic graph of the space
/// exactly once, in deterministic (canonical-key) order. `budget` caps the
/// number of yielded graphs.
pub fn enumerate_space(
    spec: &SearchSpaceSpec,
    budget: usize,
) -> Result<Vec<ArchGraph>, GraphError> {
    match spec.label_mode {
        LabelMode::EdgeLabeled => enumerate_edge_labeled(spec, budget),
        LabelMode::NodeLabeled => enumerate_node_labeled(spec, budget),
    }
}

fn enumerate_edge_labeled(
    spec: &SearchSpaceSpec,
    budget: usize,
) -> Result<Vec<ArchGraph>, GraphError> {
    if !spec.fixed_dense_edges {
        return Err(GraphError::Unsupported(
            "edge-labeled enumeration requires fixed dense edges",
        ));
    }
    let n = spec.fixed_node_count.unwrap_or(spec.max_nodes);
    let slots: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let v = spec.op_vocabulary.len();
    let total = (v as u128).pow(slots.len() as u32);
    if total > budget as u128 {
        return Err(GraphError::BudgetExceeded(budget));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut assignment = vec![0usize; slots.len()];
    loop {
        let ops: BTreeMap<(usize, usize), usize> = slots
            .iter()
            .copied()
            .zip(assignment.iter().copied())
            .collect();
        out.push(ArchGraph::new_edge_labeled(n, ops));
        // Odometer increment.
        let mut k = slots.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            assignment[k] += 1;
            if assignment[k] < v {
                break;
            }
            assignment[k] = 0;
        }
    }
}

fn enumerate_node_labeled(
    spec: &SearchSpaceSpec,
    budget: usize,
) -> Result<Vec<ArchGraph>, GraphError> {
    let node_counts: Vec<usize> = match spec.fixed_node_count {
        Some(f) => vec![f],
        None => (2..=spec.max_nodes).collect(),
    };
    let n_interior_ops = spec.interior_types().len();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    for n in node_counts {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let raw = (1u128 << pairs.len()) * (n_interior_ops.max(1) as u128).pow((n - 2) as u32);
        if raw > RAW_CANDIDATE_LIMIT {
            return Err(GraphError::BudgetExceeded(budget));
        }
        let mut types = vec![spec.input_type(); n];
        types[n - 1] = spec.output_type();
        enumerate_types(spec, &pairs, &mut types, 1, n - 1, &mut |g| {
            let key = g.canonical_key();
            if seen.insert(key) {
                if out.len() == budget {
                    return Err(GraphError::BudgetExceeded(budget));
                }
                out.push(g);
            }
            Ok(())
        })?;
    }
    out.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    Ok(out)
}

fn enumerate_types(
    spec: &SearchSpaceSpec,
    pairs: &[(usize, usize)],
    types: &mut Vec<usize>,
    idx: usize,
    last: usize,
    sink: &mut impl FnMut(ArchGraph) -> Result<(), GraphError>,
) -> Result<(), GraphError> {
    if idx == last {
        for mask in 0u64..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            if let Some(max_e) = spec.max_edges {
                if edges.len() > max_e {
                    continue;
                }
            }
            let g = match ArchGraph::try_new(types.clone(), edges, None) {
                Ok(g) => g,
                Err(_) => continue,
            };
            if !g.check_validity(spec).is_valid {
                continue;
            }
            sink(canonicalize(&g))?;
        }
        return Ok(());
    }
    for t in spec.interior_types() {
        types[idx] = t;
        enumerate_types(spec, pairs, types, idx + 1, last, sink)?;
    }
    Ok(())
}

/// Yields all canonical valid graphs obtained from `g` by inserting one new
/// labeled interior node wired to any acyclic combination of in- and
/// out-neighbors, deduplicated by canonical key. Choosing neighbor sets
/// directly (rather than an insertion position in `g`'s labeling) covers
/// expansions only reachable through other topological orders of `g`. The
/// node-count bound is relaxed to `target_nodes`; all other space
/// constraints apply.
pub fn expand_graph(
    g: &ArchGraph,
    target_nodes: usize,
    spec: &SearchSpaceSpec,
) -> Result<Vec<ArchGraph>, GraphError> {
    if spec.label_mode != LabelMode::NodeLabeled {
        return Err(GraphError::Unsupported("expansion of edge-labeled graphs"));
    }
    let n = g.node_count();
    if target_nodes != n + 1 {
        return Err(GraphError::Parse(format!(
            "target_nodes must be node_count + 1 (got {target_nodes} for {n} nodes)"
        )));
    }
    let mut relaxed = spec.clone();
    relaxed.max_nodes = target_nodes.max(spec.max_nodes);
    relaxed.fixed_node_count = spec.fixed_node_count.map(|_| target_nodes);

    let base_edges: Vec<(usize, usize)> = g.edges().collect();
    let mut types: Vec<usize> = g.node_types().to_vec();
    types.push(0); // placeholder for the new node, appended as index n

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    // Each old node connects to the new one as a predecessor, a successor,
    // or not at all: one base-3 digit per node.
    let assignments = 3usize.pow(n as u32);
    for t in spec.interior_types() {
        types[n] = t;
        for a in 0..assignments {
            let mut edges = base_edges.clone();
            let mut rem = a;
            for v in 0..n {
                match rem % 3 {
                    1 => edges.push((v, n)),
                    2 => edges.push((n, v)),
                    _ => {}
                }
                rem /= 3;
            }
            // `canonicalize_parts` restores a triangular labeling and
            // rejects cyclic wirings.
            let Ok(cand) = canonicalize_parts(&types, &edges, None) else {
                continue;
            };
            if !cand.check_validity(&relaxed).is_valid {
                continue;
            }
            if seen.insert(cand.canonical_key()) {
                out.push(cand);
            }
        }
    }
    out.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_space_has_one_graph() {
        let spec = SearchSpaceSpec::mini(2);
        let graphs = enumerate_space(&spec, 100).unwrap();
        assert_eq!(graphs.len(), 1);
        assert_eq!(graphs[0], ArchGraph::new(vec![0, 3], [(0, 1)]));
    }

    #[test]
    fn three_node_space_has_four_graphs() {
        // One interior node of 2 possible types; it either sits on the only
        // path or bypasses alongside a direct edge.
        let spec = SearchSpaceSpec::mini(3);
        let graphs = enumerate_space(&spec, 100).unwrap();
        let with_three: Vec<_> = graphs.iter().filter(|g| g.node_count() == 3).collect();
        assert_eq!(with_three.len(), 4);
        assert_eq!(graphs.len(), 5); // plus the 2-node graph
    }

    #[test]
    fn budget_overflow_is_an_error() {
        let spec = SearchSpaceSpec::mini(4);
        assert!(matches!(
            enumerate_space(&spec, 3),
            Err(GraphError::BudgetExceeded(3))
        ));
    }

    #[test]
    fn enumeration_outputs_are_canonical_valid_and_sorted() {
        let spec = SearchSpaceSpec::mini(4);
        let graphs = enumerate_space(&spec, 10_000).unwrap();
        let mut keys: Vec<String> = Vec::new();
        for g in &graphs {
            assert!(g.check_validity(&spec).is_valid);
            assert_eq!(&canonicalize(g), g);
            keys.push(g.canonical_key());
        }
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn expanding_the_minimal_graph_yields_two_candidates() {
        let spec = SearchSpaceSpec::mini(2);
        let g = ArchGraph::new(vec![0, 3], [(0, 1)]);
        let expanded = expand_graph(&g, 3, &spec).unwrap();
        // One new interior node of either type, wired input -> new -> output
        // (the original edge is retained).
        assert_eq!(expanded.len(), 2);
        for e in &expanded {
            assert_eq!(e.node_count(), 3);
        }
    }

    #[test]
    fn expansion_rejects_wrong_target() {
        let spec = SearchSpaceSpec::mini(4);
        let g = ArchGraph::new(vec![0, 3], [(0, 1)]);
        assert!(expand_graph(&g, 4, &spec).is_err());
    }

    #[test]
    fn expansion_rejects_edge_labeled_spaces() {
        let spec = SearchSpaceSpec::nb201_like();
        let mut ops = std::collections::BTreeMap::new();
        for i in 0..4usize {
            for j in i + 1..4usize {
                ops.insert((i, j), 0);
            }
        }
        let g = ArchGraph::new_edge_labeled(4, ops);
        assert!(matches!(
            expand_graph(&g, 5, &spec),
            Err(GraphError::Unsupported(_))
        ));
    }
}
