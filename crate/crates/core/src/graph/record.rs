//! JSON-lines architecture record format.
//!
//! One record per line: `{"ops": [...], "adj": [[0|1,...],...],
//! "edge_ops": [[name|null,...],...]?, "metrics": {...}?}`.
//! Adjacency must be square and strictly upper triangular.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ArchGraph, GraphError};
use crate::space::{LabelMode, SearchSpaceSpec};

/// Measured accuracies attached to a benchmark record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub val_acc: f64,
    pub test_acc: f64,
    #[serde(default)]
    pub budget_epochs: Option<u64>,
}

pub fn serialize_record(
    g: &ArchGraph,
    spec: &SearchSpaceSpec,
    metrics: Option<&RecordMetrics>,
) -> String {
    let n = g.node_count();
    let mut adj = vec![vec![0u8; n]; n];
    for (i, j) in g.edges() {
        adj[i][j] = 1;
    }
    let mut obj = serde_json::Map::new();
    let ops: Vec<Value> = match spec.label_mode {
        LabelMode::NodeLabeled => g
            .node_types()
            .iter()
            .map(|&t| Value::String(spec.op_vocabulary[t].clone()))
            .collect(),
        LabelMode::EdgeLabeled => vec![Value::String("sum".into()); n],
    };
    obj.insert("ops".into(), Value::Array(ops));
    obj.insert("adj".into(), serde_json::to_value(&adj).unwrap());
    if let Some(et) = g.edge_types() {
        let mut eo = vec![vec![Value::Null; n]; n];
        for ((i, j), &op) in et {
            eo[*i][*j] = Value::String(spec.op_vocabulary[op].clone());
        }
        obj.insert("edge_ops".into(), serde_json::to_value(&eo).unwrap());
    }
    if let Some(m) = metrics {
        obj.insert("metrics".into(), serde_json::to_value(m).unwrap());
    }
    serde_json::to_string(&Value::Object(obj)).unwrap()
}

pub fn deserialize_record(
    line: &str,
    spec: &SearchSpaceSpec,
) -> Result<(ArchGraph, Option<RecordMetrics>), GraphError> {
    let v: Value = serde_json::from_str(line)
        .map_err(|e| GraphError::Parse(format!("invalid JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| GraphError::Parse("record is not a JSON object".into()))?;
    let ops = obj
        .get("ops")
        .and_then(Value::as_array)
        .ok_or_else(|| GraphError::Parse("missing \"ops\" array".into()))?;
    let adj = obj
        .get("adj")
        .and_then(Value::as_array)
        .ok_or_else(|| GraphError::Parse("missing \"adj\" array".into()))?;
    let n = ops.len();
    if adj.len() != n {
        return Err(GraphError::Parse(format!(
            "adjacency is {}x? but there are {n} ops",
            adj.len()
        )));
    }
    let mut edges = Vec::new();
    for (i, row) in adj.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| GraphError::Parse(format!("adj row {i} is not an array")))?;
        if row.len() != n {
            return Err(GraphError::Parse(format!("adj row {i} has wrong length")));
        }
        for (j, cell) in row.iter().enumerate() {
            let bit = cell
                .as_u64()
                .ok_or_else(|| GraphError::Parse(format!("adj[{i}][{j}] is not 0/1")))?;
            if bit == 0 {
                continue;
            }
            if i >= j {
                return Err(GraphError::Parse(format!(
                    "edge ({i}, {j}) not upper triangular"
                )));
            }
            edges.push((i, j));
        }
    }
    let node_types: Vec<usize> = match spec.label_mode {
        LabelMode::NodeLabeled => ops
            .iter()
            .map(|o| {
                let name = o
                    .as_str()
                    .ok_or_else(|| GraphError::Parse("op name is not a string".into()))?;
                spec.op_index(name)
                    .ok_or_else(|| GraphError::Parse(format!("op not in vocabulary: {name}")))
            })
            .collect::<Result<_, _>>()?,
        LabelMode::EdgeLabeled => vec![0; n],
    };
    let edge_types = match spec.label_mode {
        LabelMode::NodeLabeled => None,
        LabelMode::EdgeLabeled => {
            let eo = obj
                .get("edge_ops")
                .and_then(Value::as_array)
                .ok_or_else(|| GraphError::Parse("edge-labeled record missing \"edge_ops\"".into()))?;
            let mut map = BTreeMap::new();
            for &(i, j) in &edges {
                let name = eo
                    .get(i)
                    .and_then(Value::as_array)
                    .and_then(|r| r.get(j))
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        GraphError::Parse(format!("missing edge op for edge ({i}, {j})"))
                    })?;
                let op = spec
                    .op_index(name)
                    .ok_or_else(|| GraphError::Parse(format!("op not in vocabulary: {name}")))?;
                map.insert((i, j), op);
            }
            Some(map)
        }
    };
    let metrics = match obj.get("metrics") {
        Some(m) => Some(
            serde_json::from_value(m.clone())
                .map_err(|e| GraphError::Parse(format!("bad metrics: {e}")))?,
        ),
        None => None,
    };
    let g = ArchGraph::try_new(node_types, edges, edge_types)?;
    Ok((g, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_labeled_roundtrip() {
        let spec = SearchSpaceSpec::mini(4);
        let g = ArchGraph::new(vec![0, 1, 2, 3], [(0, 1), (0, 2), (1, 3), (2, 3)]);
        let metrics = RecordMetrics {
            val_acc: 0.91,
            test_acc: 0.89,
            budget_epochs: Some(108),
        };
        let line = serialize_record(&g, &spec, Some(&metrics));
        let (g2, m2) = deserialize_record(&line, &spec).unwrap();
        assert_eq!(g, g2);
        assert_eq!(m2, Some(metrics));
    }

    #[test]
    fn edge_labeled_roundtrip() {
        let spec = SearchSpaceSpec::nb201_like();
        let mut ops = BTreeMap::new();
        for (k, (i, j)) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
            .iter()
            .enumerate()
        {
            ops.insert((*i, *j), k % 5);
        }
        let g = ArchGraph::new_edge_labeled(4, ops);
        let line = serialize_record(&g, &spec, None);
        let (g2, m2) = deserialize_record(&line, &spec).unwrap();
        assert_eq!(g, g2);
        assert_eq!(m2, None);
    }

    #[test]
    fn unknown_op_is_reported_by_name() {
        let spec = SearchSpaceSpec::mini(4);
        let line = r#"{"ops":["input","conv7x7","output"],"adj":[[0,1,0],[0,0,1],[0,0,0]]}"#;
        let err = deserialize_record(line, &spec).unwrap_err();
        assert!(matches!(err, GraphError::Parse(m) if m.contains("conv7x7")));
    }

    #[test]
    fn lower_triangular_adjacency_is_rejected() {
        let spec = SearchSpaceSpec::mini(4);
        let line = r#"{"ops":["input","output"],"adj":[[0,0],[1,0]]}"#;
        let err = deserialize_record(line, &spec).unwrap_err();
        assert!(matches!(err, GraphError::Parse(m) if m.contains("not upper triangular")));
    }

    #[test]
    fn missing_fields_are_rejected() {
        let spec = SearchSpaceSpec::mini(4);
        assert!(deserialize_record(r#"{"adj":[[0]]}"#, &spec).is_err());
        assert!(deserialize_record(r#"{"ops":["input","output"]}"#, &spec).is_err());
        assert!(deserialize_record("not json", &spec).is_err());
    }

    #[test]
    fn edge_labeled_records_require_edge_ops() {
        let spec = SearchSpaceSpec::nb201_like();
        let line = r#"{"ops":["sum","sum"],"adj":[[0,1],[0,0]]}"#;
        assert!(deserialize_record(line, &spec).is_err());
    }
}
