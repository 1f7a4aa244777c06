//! Search-space specifications: declarative constraints defining a family of
//! valid architecture DAGs.

use serde::{Deserialize, Serialize};

/// Whether operations live on nodes or on edges between feature-sum nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    NodeLabeled,
    EdgeLabeled,
}

/// Declarative constraints for a family of architecture DAGs.
///
/// For node-labeled spaces the vocabulary convention is: index 0 is the input
/// type, the last index is the output type, and everything in between is an
/// interior operation. For edge-labeled spaces the vocabulary holds edge
/// operations and all nodes share a single implicit "sum" type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpaceSpec {
    pub label_mode: LabelMode,
    pub op_vocabulary: Vec<String>,
    pub max_nodes: usize,
    #[serde(default)]
    pub max_edges: Option<usize>,
    #[serde(default)]
    pub fixed_node_count: Option<usize>,
    #[serde(default)]
    pub fixed_dense_edges: bool,
}

impl SearchSpaceSpec {
    pub fn new(
        label_mode: LabelMode,
        op_vocabulary: Vec<String>,
        max_nodes: usize,
    ) -> Self {
        assert!(!op_vocabulary.is_empty(), "op vocabulary must be non-empty");
        assert!(max_nodes >= 2, "max_nodes must be at least 2");
        SearchSpaceSpec {
            label_mode,
            op_vocabulary,
            max_nodes,
            max_edges: None,
            fixed_node_count: None,
            fixed_dense_edges: false,
        }
    }

    /// Cells with up to 7 nodes, up to 9 edges and 3 interior operations.
    pub fn nb101_like() -> Self {
        let mut s = Self::new(
            LabelMode::NodeLabeled,
            vec![
                "input".into(),
                "conv1x1".into(),
                "conv3x3".into(),
                "maxpool3x3".into(),
                "output".into(),
            ],
            7,
        );
        s.max_edges = Some(9);
        s
    }

    /// 4 feature-sum nodes with all 6 upper-triangular edge slots carrying
    /// one of 5 operations.
    pub fn nb201_like() -> Self {
        let mut s = Self::new(
            LabelMode::EdgeLabeled,
            vec![
                "conv1x1".into(),
                "conv3x3".into(),
                "avgpool3x3".into(),
                "skip".into(),
                "zero".into(),
            ],
            4,
        );
        s.fixed_node_count = Some(4);
        s.fixed_dense_edges = true;
        s.max_edges = Some(6);
        s
    }

    /// 8 nodes (input and output included) with 6 interior operation choices.
    pub fn enas_like() -> Self {
        let mut s = Self::new(
            LabelMode::NodeLabeled,
            vec![
                "input".into(),
                "conv3x3".into(),
                "sep_conv3x3".into(),
                "conv5x5".into(),
                "sep_conv5x5".into(),
                "avgpool3x3".into(),
                "maxpool3x3".into(),
                "output".into(),
            ],
            8,
        );
        s.fixed_node_count = Some(8);
        s
    }

    /// Small node-labeled space with two interior ops, used as the desk-scale
    /// training bed.
    pub fn mini(max_nodes: usize) -> Self {
        Self::new(
            LabelMode::NodeLabeled,
            vec![
                "input".into(),
                "conv_a".into(),
                "skip_b".into(),
                "output".into(),
            ],
            max_nodes,
        )
    }

    pub fn is_node_labeled(&self) -> bool {
        self.label_mode == LabelMode::NodeLabeled
    }

    /// Type id of the input node (node-labeled spaces).
    pub fn input_type(&self) -> usize {
        0
    }

    /// Type id of the output node (node-labeled spaces).
    pub fn output_type(&self) -> usize {
        self.op_vocabulary.len() - 1
    }

    /// Interior operation type ids (node-labeled spaces).
    pub fn interior_types(&self) -> std::ops::Range<usize> {
        1..self.op_vocabulary.len() - 1
    }

    pub fn op_index(&self, name: &str) -> Option<usize> {
        self.op_vocabulary.iter().position(|o| o == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_shapes() {
        let nb101 = SearchSpaceSpec::nb101_like();
        assert_eq!(nb101.op_vocabulary.len(), 5);
        assert_eq!(nb101.max_nodes, 7);
        assert_eq!(nb101.max_edges, Some(9));
        assert!(nb101.is_node_labeled());

        let nb201 = SearchSpaceSpec::nb201_like();
        assert_eq!(nb201.op_vocabulary.len(), 5);
        assert_eq!(nb201.fixed_node_count, Some(4));
        assert!(nb201.fixed_dense_edges);
        assert!(!nb201.is_node_labeled());

        let enas = SearchSpaceSpec::enas_like();
        assert_eq!(enas.op_vocabulary.len(), 8);
        assert_eq!(enas.fixed_node_count, Some(8));
    }

    #[test]
    fn type_helpers() {
        let spec = SearchSpaceSpec::mini(5);
        assert_eq!(spec.input_type(), 0);
        assert_eq!(spec.output_type(), 3);
        assert_eq!(spec.interior_types(), 1..3);
        assert_eq!(spec.op_index("skip_b"), Some(2));
        assert_eq!(spec.op_index("nope"), None);
    }

    #[test]
    fn spec_serde_roundtrip() {
        let spec = SearchSpaceSpec::nb201_like();
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("edge-labeled"));
        let back: SearchSpaceSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
