//! Autoencoder ability metrics: reconstruction accuracy, prior validity /
//! uniqueness / novelty, and the isomorphism mapping test.

use std::collections::BTreeSet;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::graph::ArchGraph;
use crate::model::decoder::{decode, DecodeMode};
use crate::model::encoder::{encode_mean_vec, encode_posterior_vec};
use crate::model::ModelParams;
use crate::trainer::standard_normal;
use crate::util::{par_map, rng_stream};

/// Percentages are in [0,100]; `uniqueness`/`novelty` are `None` when no
/// valid decode exists to take a share of.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbilityReport {
    pub accuracy: Option<f64>,
    pub validity: f64,
    pub uniqueness: Option<f64>,
    pub novelty: Option<f64>,
    pub n_test: usize,
    pub n_z: usize,
    pub n_prior: usize,
    pub n_decode: usize,
}

/// One row of the prior-sample decode log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeLogEntry {
    pub z_index: usize,
    pub decode_index: usize,
    pub record: serde_json::Value,
    pub valid: bool,
    pub canonical_hash: String,
}

fn posterior_sample(mean: &Array1<f64>, log_var: &Array1<f64>, rng: &mut impl rand::Rng) -> Array1<f64> {
    Array1::from_shape_fn(mean.len(), |j| {
        mean[j] + (0.5 * log_var[j]).exp() * standard_normal(rng)
    })
}

/// Fraction (as a percentage) of stochastic decodes of posterior samples
/// whose canonical form matches the encoded input. `n_z` posterior samples
/// per graph, `n_decode` decodes per sample.
pub fn reconstruction_accuracy(
    model: &ModelParams,
    test_set: &[ArchGraph],
    n_z: usize,
    n_decode: usize,
    seed: u64,
) -> f64 {
    if test_set.is_empty() {
        return 0.0;
    }
    let items: Vec<(usize, &ArchGraph)> = test_set.iter().enumerate().collect();
    let hits: usize = par_map(items, |(i, g)| {
        let key = g.canonical_key();
        let (mean, log_var) = encode_posterior_vec(model, g);
        let mut rng = rng_stream(seed, 0x3000_0000 + i as u64);
        let mut hits = 0usize;
        for _ in 0..n_z {
            let z = posterior_sample(&mean, &log_var, &mut rng);
            for _ in 0..n_decode {
                let decoded = decode(model, &z, DecodeMode::Sample, &mut rng);
                if decoded.canonical_key() == key {
                    hits += 1;
                }
            }
        }
        hits
    })
    .into_iter()
    .sum();
    100.0 * hits as f64 / (test_set.len() * n_z * n_decode) as f64
}

/// Greedy variant: one deterministic decode of each posterior mean.
pub fn greedy_reconstruction_accuracy(model: &ModelParams, test_set: &[ArchGraph]) -> f64 {
    if test_set.is_empty() {
        return 0.0;
    }
    let items: Vec<&ArchGraph> = test_set.iter().collect();
    let hits: usize = par_map(items, |g| {
        let mean = encode_mean_vec(model, g);
        // Greedy decoding draws no randomness; the rng is a formality.
        let mut rng = rng_stream(0, 0);
        let decoded = decode(model, &mean, DecodeMode::Greedy, &mut rng);
        (decoded.canonical_key() == g.canonical_key()) as usize
    })
    .into_iter()
    .sum();
    100.0 * hits as f64 / test_set.len() as f64
}

/// Samples `n_prior` latent points from the unit Gaussian, stochastically
/// decodes each `n_decode` times, and scores validity, uniqueness over the
/// valid subset, and novelty against the training set. Returns the report and
/// the full decode log.
pub fn prior_metrics(
    model: &ModelParams,
    training_set: &[ArchGraph],
    n_prior: usize,
    n_decode: usize,
    seed: u64,
) -> ((f64, Option<f64>, Option<f64>), Vec<DecodeLogEntry>) {
    let seen: BTreeSet<String> = training_set.iter().map(|g| g.canonical_key()).collect();
    let d_z = model.dims.d_z;
    let indices: Vec<usize> = (0..n_prior).collect();
    let logs: Vec<Vec<DecodeLogEntry>> = par_map(indices, |i| {
        let mut rng = rng_stream(seed, 0x4000_0000 + i as u64);
        let z = Array1::from_shape_fn(d_z, |_| standard_normal(&mut rng));
        (0..n_decode)
            .map(|k| {
                let g = decode(model, &z, DecodeMode::Sample, &mut rng);
                let valid = g.check_validity(&model.spec).is_valid;
                DecodeLogEntry {
                    z_index: i,
                    decode_index: k,
                    record: graph_record_value(&g),
                    valid,
                    canonical_hash: g.canonical_hash(),
                }
            })
            .collect()
    });
    let log: Vec<DecodeLogEntry> = logs.into_iter().flatten().collect();

    let total = log.len();
    let valid: Vec<&DecodeLogEntry> = log.iter().filter(|e| e.valid).collect();
    let validity = 100.0 * valid.len() as f64 / total as f64;
    let (uniqueness, novelty) = if valid.is_empty() {
        (None, None)
    } else {
        let mut distinct = BTreeSet::new();
        let mut novel = 0usize;
        for e in &valid {
            distinct.insert(e.canonical_hash.clone());
            let key = record_canonical_key(&e.record);
            if !seen.contains(&key) {
                novel += 1;
            }
        }
        (
            Some(100.0 * distinct.len() as f64 / valid.len() as f64),
            Some(100.0 * novel as f64 / valid.len() as f64),
        )
    };
    ((validity, uniqueness, novelty), log)
}

/// Percentage of pairs whose embedding means are bitwise equal. Pairs are
/// assumed isomorphic; verification belongs to the caller.
pub fn iso_mapping_test(model: &ModelParams, pairs: &[(ArchGraph, ArchGraph)]) -> f64 {
    if pairs.is_empty() {
        return 100.0;
    }
    let items: Vec<&(ArchGraph, ArchGraph)> = pairs.iter().collect();
    let hits: usize = par_map(items, |(a, b)| {
        let ma = encode_mean_vec(model, a);
        let mb = encode_mean_vec(model, b);
        let same = ma.len() == mb.len()
            && ma
                .iter()
                .zip(mb.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits());
        same as usize
    })
    .into_iter()
    .sum();
    100.0 * hits as f64 / pairs.len() as f64
}

/// Bare graph record (no metrics) used in decode logs; kept self-describing
/// so the log can be recounted without the model.
pub fn graph_record_value(g: &ArchGraph) -> serde_json::Value {
    let n = g.node_count();
    let mut adj = vec![vec![0u8; n]; n];
    for (i, j) in g.edges() {
        adj[i][j] = 1;
    }
    let mut v = json!({
        "node_types": g.node_types(),
        "adj": adj,
    });
    if let Some(et) = g.edge_types() {
        let mut ops = vec![vec![serde_json::Value::Null; n]; n];
        for (&(i, j), &op) in et {
            ops[i][j] = json!(op);
        }
        v["edge_ops"] = json!(ops);
    }
    v
}

fn record_canonical_key(record: &serde_json::Value) -> String {
    graph_from_record_value(record)
        .map(|g| g.canonical_key())
        .unwrap_or_default()
}

/// Inverse of [`graph_record_value`].
pub fn graph_from_record_value(record: &serde_json::Value) -> Option<ArchGraph> {
    let types: Vec<usize> = record["node_types"]
        .as_array()?
        .iter()
        .map(|v| v.as_u64().map(|x| x as usize))
        .collect::<Option<_>>()?;
    let adj = record["adj"].as_array()?;
    let mut edges = Vec::new();
    for (i, row) in adj.iter().enumerate() {
        for (j, cell) in row.as_array()?.iter().enumerate() {
            if cell.as_u64()? == 1 {
                edges.push((i, j));
            }
        }
    }
    let edge_types = record.get("edge_ops").and_then(|ops| {
        let mut map = std::collections::BTreeMap::new();
        for (i, row) in ops.as_array()?.iter().enumerate() {
            for (j, cell) in row.as_array()?.iter().enumerate() {
                if let Some(op) = cell.as_u64() {
                    map.insert((i, j), op as usize);
                }
            }
        }
        Some(map)
    });
    ArchGraph::try_new(types, edges, edge_types).ok()
}
