//! Canonical labeling via branch-and-bound over admissible topological
//! orders, and brute-force-scope isomorphism testing.

use std::collections::BTreeMap;

use super::{ArchGraph, GraphError, NodeTypeId, OpTypeId};

/// Node budget for `is_isomorphic`; larger graphs are rejected and deduped
/// through canonical keys only.
pub const ISO_NODE_LIMIT: usize = 10;

/// Per-placement component of the canonical ordering key: the placed node's
/// type, the incoming-edge bit pattern over already-placed positions, and the
/// edge operations (edge-labeled graphs only).
#[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Debug)]
struct StepKey {
    ty: NodeTypeId,
    bits: u64,
    ops: Vec<OpTypeId>,
}

/// Returns the canonical relabeling of a graph given as raw parts. The input
/// may use any (acyclic) labeling; edges need not be upper triangular.
///
/// The canonical form is the lexicographic minimum of the per-placement key
/// sequence over all topological orders. For valid architecture graphs the
/// unique source (input) lands at index 0 and the unique sink (output) at the
/// last index. Edge-labeled graphs keep their given labeling: upper-triangular
/// edge-labeled matrices are treated as already unique, so only triangularity
/// is restored (which requires a topological input).
pub fn canonicalize_parts(
    node_types: &[NodeTypeId],
    edges: &[(usize, usize)],
    edge_types: Option<&BTreeMap<(usize, usize), OpTypeId>>,
) -> Result<ArchGraph, GraphError> {
    let n = node_types.len();
    if n < 2 {
        return Err(GraphError::Parse("graph needs at least 2 nodes".into()));
    }
    let mut in_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in edges {
        if i == j || i >= n || j >= n {
            return Err(GraphError::Parse(format!("bad edge ({i}, {j})")));
        }
        in_adj[j].push(i);
        out_adj[i].push(j);
    }
    check_acyclic(n, &out_adj)?;

    if let Some(et) = edge_types {
        // Edge-labeled: identity relabeling, edges must already be triangular.
        let mapped: BTreeMap<(usize, usize), OpTypeId> = et.clone();
        return ArchGraph::try_new(node_types.to_vec(), edges.iter().copied(), Some(mapped));
    }

    let mut search = CanonSearch {
        n,
        node_types,
        in_adj: &in_adj,
        out_adj: &out_adj,
        placed: Vec::with_capacity(n),
        pos_of: vec![usize::MAX; n],
        in_placed: vec![0usize; n],
        key: Vec::with_capacity(n),
        best: None,
        best_order: Vec::new(),
    };
    search.run();
    let order = search.best_order;
    debug_assert_eq!(order.len(), n);
    let mut pos = vec![0usize; n];
    for (p, &orig) in order.iter().enumerate() {
        pos[orig] = p;
    }
    let new_types: Vec<NodeTypeId> = order.iter().map(|&o| node_types[o]).collect();
    let new_edges: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (pos[i], pos[j])).collect();
    ArchGraph::try_new(new_types, new_edges, None)
}

/// Canonicalizes an already well-formed [`ArchGraph`]. Idempotent.
pub fn canonicalize(g: &ArchGraph) -> ArchGraph {
    if g.is_edge_labeled() {
        return g.clone();
    }
    let edges: Vec<_> = g.edges().collect();
    canonicalize_parts(g.node_types(), &edges, None)
        .expect("well-formed graph always canonicalizes")
}

fn check_acyclic(n: usize, out_adj: &[Vec<usize>]) -> Result<(), GraphError> {
    let mut indeg = vec![0usize; n];
    for outs in out_adj {
        for &j in outs {
            indeg[j] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &j in &out_adj[v] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push(j);
            }
        }
    }
    if seen == n {
        Ok(())
    } else {
        Err(GraphError::CycleDetected)
    }
}

struct CanonSearch<'a> {
    n: usize,
    node_types: &'a [NodeTypeId],
    in_adj: &'a [Vec<usize>],
    out_adj: &'a [Vec<usize>],
    placed: Vec<usize>,
    pos_of: Vec<usize>,
    in_placed: Vec<usize>,
    key: Vec<StepKey>,
    best: Option<Vec<StepKey>>,
    best_order: Vec<usize>,
}

impl CanonSearch<'_> {
    fn run(&mut self) {
        self.dfs(true);
    }

    /// `tight` is true while the current prefix equals the best-known prefix.
    /// Branches whose prefix exceeds the incumbent are pruned; completions
    /// are compared in full.
    fn dfs(&mut self, tight: bool) {
        let depth = self.placed.len();
        if depth == self.n {
            if self.best.is_none() || self.key < *self.best.as_ref().unwrap() {
                self.best = Some(self.key.clone());
                self.best_order = self.placed.clone();
            }
            return;
        }
        // Eligible: unplaced nodes with all predecessors placed.
        let eligible: Vec<usize> = (0..self.n)
            .filter(|&v| self.pos_of[v] == usize::MAX && self.in_placed[v] == self.in_adj[v].len())
            .collect();
        for v in eligible {
            let mut bits = 0u64;
            for (q, &u) in self.placed.iter().enumerate() {
                if self.in_adj[v].contains(&u) {
                    bits |= 1 << q;
                }
            }
            let step = StepKey {
                ty: self.node_types[v],
                bits,
                ops: Vec::new(),
            };
            let mut child_tight = tight;
            if tight {
                if let Some(best) = &self.best {
                    match step.cmp(&best[depth]) {
                        std::cmp::Ordering::Greater => continue,
                        std::cmp::Ordering::Less => child_tight = false,
                        std::cmp::Ordering::Equal => {}
                    }
                }
            }
            self.placed.push(v);
            self.pos_of[v] = depth;
            for &j in &self.out_adj[v] {
                self.in_placed[j] += 1;
            }
            self.key.push(step);
            self.dfs(child_tight);
            self.key.pop();
            for &j in &self.out_adj[v] {
                self.in_placed[j] -= 1;
            }
            self.pos_of[v] = usize::MAX;
            self.placed.pop();
        }
    }
}

/// Label-preserving isomorphism test; equals equality of canonical forms.
/// Rejects graphs beyond the brute-force budget.
pub fn is_isomorphic(g1: &ArchGraph, g2: &ArchGraph) -> Result<bool, GraphError> {
    let n = g1.node_count().max(g2.node_count());
    if n > ISO_NODE_LIMIT {
        return Err(GraphError::TooLarge(n, ISO_NODE_LIMIT));
    }
    if g1.node_count() != g2.node_count() || g1.is_edge_labeled() != g2.is_edge_labeled() {
        return Ok(false);
    }
    Ok(canonicalize(g1) == canonicalize(g2))
}
