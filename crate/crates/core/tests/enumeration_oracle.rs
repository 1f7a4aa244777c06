//! Independent brute-force checks on the enumerator and the one-node
//! expansion. The oracle here walks every type assignment and edge mask
//! directly, with no sharing of logic with the crate's enumerator.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use dagvae_core::graph::{canonicalize, enumerate_space, expand_graph};
use dagvae_core::{ArchGraph, SearchSpaceSpec};

/// All upper-triangular pairs of an `n`-node graph, in a fixed order so a
/// bitmask picks an edge subset.
fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((i, j));
        }
    }
    out
}

/// Exhaustive enumeration by brute force: input first, output last, every
/// interior type assignment, every edge subset; keep valid graphs and count
/// distinct canonical forms per node count.
fn brute_force_counts(spec: &SearchSpaceSpec) -> BTreeMap<usize, usize> {
    let mut keys: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for n in 2..=spec.max_nodes {
        let all_pairs = pairs(n);
        let interior: Vec<usize> = spec.interior_types().collect();
        let n_interior = n - 2;
        let n_assignments = interior.len().pow(n_interior as u32).max(1);
        for a in 0..n_assignments {
            let mut types = vec![spec.input_type()];
            let mut rem = a;
            for _ in 0..n_interior {
                types.push(interior[rem % interior.len()]);
                rem /= interior.len();
            }
            types.push(spec.output_type());
            for mask in 0u64..(1 << all_pairs.len()) {
                let edges = all_pairs
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &e)| e);
                let Ok(g) = ArchGraph::try_new(types.clone(), edges, None) else {
                    continue;
                };
                if g.check_validity(spec).is_valid {
                    keys.entry(n).or_default().insert(g.canonical_key());
                }
            }
        }
    }
    keys.into_iter().map(|(n, s)| (n, s.len())).collect()
}

#[test]
fn enumerator_matches_brute_force_on_small_spaces() {
    for max_nodes in 2..=5 {
        let spec = SearchSpaceSpec::mini(max_nodes);
        let oracle = brute_force_counts(&spec);
        let listed = enumerate_space(&spec, usize::MAX).unwrap();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for g in &listed {
            *counts.entry(g.node_count()).or_default() += 1;
        }
        assert_eq!(counts, oracle, "max_nodes = {max_nodes}");
    }
}

#[test]
fn five_node_space_has_the_frozen_size_breakdown() {
    let spec = SearchSpaceSpec::mini(5);
    let listed = enumerate_space(&spec, usize::MAX).unwrap();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for g in &listed {
        *counts.entry(g.node_count()).or_default() += 1;
    }
    assert_eq!(
        counts,
        BTreeMap::from([(2, 1), (3, 4), (4, 38), (5, 744)])
    );
    assert_eq!(listed.len(), 787);
}

#[test]
fn fixed_cell_edge_labeled_space_has_five_to_the_sixth_graphs() {
    // 4 feature nodes, dense triangular wiring, 5 operation choices per edge:
    // 5^6 distinct cells.
    let spec = SearchSpaceSpec::nb201_like();
    let listed = enumerate_space(&spec, usize::MAX).unwrap();
    assert_eq!(listed.len(), 15_625);
    let keys: BTreeSet<String> = listed.iter().map(|g| g.canonical_key()).collect();
    assert_eq!(keys.len(), 15_625);
}

/// Removes node `p` and its incident edges, shifting later indices down.
fn delete_node(g: &ArchGraph, p: usize) -> Option<ArchGraph> {
    let mut types = g.node_types().to_vec();
    types.remove(p);
    let edges: Vec<(usize, usize)> = g
        .edges()
        .filter(|&(i, j)| i != p && j != p)
        .map(|(i, j)| (if i > p { i - 1 } else { i }, if j > p { j - 1 } else { j }))
        .collect();
    ArchGraph::try_new(types, edges, None).ok()
}

#[test]
fn expansion_matches_the_delete_one_node_oracle() {
    let spec = SearchSpaceSpec::mini(5);
    let bases = [
        ArchGraph::new(vec![0, 1, 3], [(0, 1), (1, 2)]),
        ArchGraph::new(vec![0, 2, 3], [(0, 1), (0, 2), (1, 2)]),
        ArchGraph::new(vec![0, 1, 2, 3], [(0, 1), (0, 2), (1, 3), (2, 3)]),
    ];
    for base in bases {
        let n = base.node_count();
        let base_key = base.canonical_key();
        let expanded = expand_graph(&base, n + 1, &spec).unwrap();
        let got: BTreeSet<String> = expanded.iter().map(|g| g.canonical_key()).collect();
        assert_eq!(got.len(), expanded.len(), "expansion output has duplicates");

        // Oracle: every valid (n+1)-node graph where deleting one interior
        // node recovers the base graph. Node-count constraints are relaxed
        // exactly as the expansion relaxes them.
        let mut relaxed = spec.clone();
        relaxed.max_nodes = spec.max_nodes.max(n + 1);
        let all_pairs = pairs(n + 1);
        let interior: Vec<usize> = spec.interior_types().collect();
        let mut oracle: BTreeSet<String> = BTreeSet::new();
        let n_interior = n - 1;
        for a in 0..interior.len().pow(n_interior as u32) {
            let mut types = vec![spec.input_type()];
            let mut rem = a;
            for _ in 0..n_interior {
                types.push(interior[rem % interior.len()]);
                rem /= interior.len();
            }
            types.push(spec.output_type());
            for mask in 0u64..(1 << all_pairs.len()) {
                let edges = all_pairs
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &e)| e);
                let Ok(h) = ArchGraph::try_new(types.clone(), edges, None) else {
                    continue;
                };
                if !h.check_validity(&relaxed).is_valid {
                    continue;
                }
                let recovers_base = (1..n).any(|p| {
                    delete_node(&h, p)
                        .map(|r| r.canonical_key() == base_key)
                        .unwrap_or(false)
                });
                if recovers_base {
                    oracle.insert(canonicalize(&h).canonical_key());
                }
            }
        }
        assert_eq!(got, oracle, "base = {base:?}");
    }
}
