//! Architecture DAGs: validity checking, canonical labeling, isomorphism,
//! enumeration and node-insertion expansion.

mod canon;
mod enumerate;
mod record;

pub use record::{deserialize_record, serialize_record, RecordMetrics};

use std::collections::{BTreeMap, BTreeSet};

use crate::space::{LabelMode, SearchSpaceSpec};

pub type NodeTypeId = usize;
pub type OpTypeId = usize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("input graph contains a directed cycle")]
    CycleDetected,
    #[error("graph too large for brute-force isomorphism ({0} nodes, limit {1})")]
    TooLarge(usize, usize),
    #[error("enumeration budget exceeded (cap {0})")]
    BudgetExceeded(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("operation unsupported for this label mode: {0}")]
    Unsupported(&'static str),
}

/// A labeled DAG representing one architecture.
///
/// Edges are kept strictly upper triangular, so node index order is always a
/// topological order. For node-labeled spaces, index 0 carries the input type
/// and the last index the output type. Edge-labeled graphs additionally carry
/// an operation per edge and keep their given labeling (see
/// [`ArchGraph::canonicalize`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArchGraph {
    node_types: Vec<NodeTypeId>,
    edges: BTreeSet<(usize, usize)>,
    edge_types: Option<BTreeMap<(usize, usize), OpTypeId>>,
}

/// Outcome of validity checking; invalid graphs carry named violations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub is_valid: bool,
    pub violations: Vec<String>,
}

impl ValidityReport {
    fn from_violations(violations: Vec<String>) -> Self {
        ValidityReport {
            is_valid: violations.is_empty(),
            violations,
        }
    }
}

impl ArchGraph {
    /// Builds a node-labeled graph. Panics if any edge is not upper
    /// triangular or references a missing node; use [`ArchGraph::try_new`]
    /// from parsing paths.
    pub fn new(node_types: Vec<NodeTypeId>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::try_new(node_types, edges, None).expect("malformed ArchGraph")
    }

    pub fn try_new(
        node_types: Vec<NodeTypeId>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        edge_types: Option<BTreeMap<(usize, usize), OpTypeId>>,
    ) -> Result<Self, GraphError> {
        let n = node_types.len();
        if n < 2 {
            return Err(GraphError::Parse(format!("graph needs at least 2 nodes, got {n}")));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= j {
                return Err(GraphError::Parse(format!("edge ({i}, {j}) not upper triangular")));
            }
            if j >= n {
                return Err(GraphError::Parse(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            set.insert((i, j));
        }
        if let Some(et) = &edge_types {
            for (i, j) in et.keys() {
                if !set.contains(&(*i, *j)) {
                    return Err(GraphError::Parse(format!(
                        "edge op on missing edge ({i}, {j})"
                    )));
                }
            }
            if et.len() != set.len() {
                return Err(GraphError::Parse("edge-labeled graph with unlabeled edges".into()));
            }
        }
        Ok(ArchGraph {
            node_types,
            edges: set,
            edge_types,
        })
    }

    /// Builds an edge-labeled graph over `n` feature-sum nodes.
    pub fn new_edge_labeled(n: usize, edge_ops: BTreeMap<(usize, usize), OpTypeId>) -> Self {
        let edges: Vec<_> = edge_ops.keys().copied().collect();
        Self::try_new(vec![0; n], edges, Some(edge_ops)).expect("malformed edge-labeled ArchGraph")
    }

    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn node_types(&self) -> &[NodeTypeId] {
        &self.node_types
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn edge_types(&self) -> Option<&BTreeMap<(usize, usize), OpTypeId>> {
        self.edge_types.as_ref()
    }

    pub fn is_edge_labeled(&self) -> bool {
        self.edge_types.is_some()
    }

    pub fn in_neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, j)| *j == v)
            .map(|(i, _)| *i)
            .collect()
    }

    pub fn out_neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .range((v, 0)..(v + 1, 0))
            .map(|(_, j)| *j)
            .collect()
    }

    /// Nodes reachable from `start` following edges forward (`rev = false`)
    /// or backward (`rev = true`), including `start`.
    fn reachable(&self, start: usize, rev: bool) -> Vec<bool> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            let next = if rev { self.in_neighbors(v) } else { self.out_neighbors(v) };
            for u in next {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Checks a (possibly arbitrary decoder output) graph against a space.
    /// Never fails: every problem becomes a named violation.
    pub fn check_validity(&self, spec: &SearchSpaceSpec) -> ValidityReport {
        let mut v = Vec::new();
        let n = self.node_count();
        if n < 2 {
            v.push("node_count".to_string());
        }
        if n > spec.max_nodes {
            v.push("max_nodes".to_string());
        }
        if let Some(fixed) = spec.fixed_node_count {
            if n != fixed {
                v.push("fixed_node_count".to_string());
            }
        }
        if let Some(max_e) = spec.max_edges {
            if self.edges.len() > max_e {
                v.push("max_edges".to_string());
            }
        }
        match spec.label_mode {
            LabelMode::NodeLabeled => {
                if self.is_edge_labeled() {
                    v.push("edge_labels".to_string());
                }
                let input_t = spec.input_type();
                let output_t = spec.output_type();
                if self.node_types.iter().any(|&t| t >= spec.op_vocabulary.len()) {
                    v.push("op_vocabulary".to_string());
                }
                let inputs = self.node_types.iter().filter(|&&t| t == input_t).count();
                let outputs = self.node_types.iter().filter(|&&t| t == output_t).count();
                if inputs != 1 {
                    v.push("unique_input".to_string());
                }
                if outputs != 1 {
                    v.push("unique_output".to_string());
                }
                if self.node_types.first() != Some(&input_t) {
                    v.push("input_placement".to_string());
                }
                if self.node_types.last() != Some(&output_t) {
                    v.push("output_placement".to_string());
                }
            }
            LabelMode::EdgeLabeled => {
                if !self.is_edge_labeled() && !self.edges.is_empty() {
                    v.push("edge_labels".to_string());
                }
                if let Some(et) = &self.edge_types {
                    if et.values().any(|&op| op >= spec.op_vocabulary.len()) {
                        v.push("op_vocabulary".to_string());
                    }
                }
                if spec.fixed_dense_edges {
                    let full = n * (n - 1) / 2;
                    if self.edges.len() != full {
                        v.push("dense_edges".to_string());
                    }
                }
            }
        }
        // Every non-input node must be reachable from the input and every
        // non-output node must reach the output.
        if n >= 2 {
            let from_input = self.reachable(0, false);
            let to_output = self.reachable(n - 1, true);
            if (0..n).any(|i| !from_input[i] || !to_output[i]) {
                v.push("dangling_node".to_string());
            }
        }
        ValidityReport::from_violations(v)
    }

    /// Compact deterministic key of the canonical form; used for dedup and
    /// novelty hashing. Isomorphic graphs share a key.
    pub fn canonical_key(&self) -> String {
        canon::canonicalize(self).raw_key()
    }

    /// Serialization of the graph exactly as labeled, without relabeling.
    fn raw_key(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("n{};t", self.node_count()));
        for t in &self.node_types {
            s.push_str(&format!("{t},"));
        }
        s.push_str(";e");
        for (i, j) in &self.edges {
            s.push_str(&format!("{i}-{j}"));
            if let Some(et) = &self.edge_types {
                s.push_str(&format!(":{}", et[&(*i, *j)]));
            }
            s.push(',');
        }
        s
    }

    /// Short stable hex digest of the canonical key.
    pub fn canonical_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_key().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub use canon::{canonicalize, canonicalize_parts, is_isomorphic, ISO_NODE_LIMIT};
pub use enumerate::{enumerate_space, expand_graph};
