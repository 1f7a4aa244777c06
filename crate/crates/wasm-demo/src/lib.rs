//! Browser bindings over an embedded pretrained model (4-node two-operation
//! space). Three operations, each returning plain JSON the page renders as
//! SVG:
//!
//! * `circle_walk` — greedy-decode latent points on a seeded circle,
//! * `prior_samples` — decode random draws from the prior,
//! * `interpolate` — walk the segment between two graphs' latent means.
//!
//! Everything is deterministic for a fixed seed. The functions are also
//! callable natively, which is how the crate's tests exercise them.

use std::sync::OnceLock;

use ndarray::Array1;
use wasm_bindgen::prelude::*;

use dagvae_core::checkpoint::load_model_from_str;
use dagvae_core::graph::enumerate_space;
use dagvae_core::metrics::graph_record_value;
use dagvae_core::model::decoder::{decode, DecodeMode};
use dagvae_core::model::encoder::encode_mean_vec;
use dagvae_core::model::ModelParams;
use dagvae_core::trainer::standard_normal;
use dagvae_core::util::rng_stream;
use dagvae_core::ArchGraph;

const MODEL_JSON: &str = include_str!("../assets/model.json");

fn model() -> &'static ModelParams {
    static MODEL: OnceLock<ModelParams> = OnceLock::new();
    MODEL.get_or_init(|| load_model_from_str(MODEL_JSON).expect("embedded checkpoint parses"))
}

fn space() -> &'static Vec<ArchGraph> {
    static SPACE: OnceLock<Vec<ArchGraph>> = OnceLock::new();
    SPACE.get_or_init(|| enumerate_space(&model().spec, 100_000).expect("space enumerates"))
}

fn graph_json(g: &ArchGraph, spec: &dagvae_core::SearchSpaceSpec) -> serde_json::Value {
    let mut v = graph_record_value(g);
    let names: Vec<&str> = g
        .node_types()
        .iter()
        .map(|&t| spec.op_vocabulary[t].as_str())
        .collect();
    v["ops"] = serde_json::json!(names);
    v["valid"] = serde_json::json!(g.check_validity(spec).is_valid);
    v
}

/// Space summary for the page header: operation names, latent width, and
/// every graph of the space (for the interpolation pickers).
#[wasm_bindgen]
pub fn model_info() -> String {
    let m = model();
    let graphs: Vec<serde_json::Value> = space()
        .iter()
        .map(|g| graph_json(g, &m.spec))
        .collect();
    serde_json::json!({
        "ops": m.spec.op_vocabulary,
        "max_nodes": m.spec.max_nodes,
        "d_z": m.dims.d_z,
        "space_size": graphs.len(),
        "space": graphs,
    })
    .to_string()
}

/// Greedy decodes of `n_points` latent points on a circle of the given
/// radius, spanned by two seeded orthonormal directions.
#[wasm_bindgen]
pub fn circle_walk(seed: u32, n_points: u32, radius: f64) -> String {
    let m = model();
    let d = m.dims.d_z;
    let mut rng = rng_stream(seed as u64, 0xB000_0001);
    let mut u = Array1::from_shape_fn(d, |_| standard_normal(&mut rng));
    u /= u.dot(&u).sqrt();
    let mut v = loop {
        let mut w = Array1::from_shape_fn(d, |_| standard_normal(&mut rng));
        w = &w - &(u.clone() * u.dot(&w));
        let norm = w.dot(&w).sqrt();
        if norm > 1e-9 {
            break w / norm;
        }
    };
    v /= v.dot(&v).sqrt();

    let mut decode_rng = rng_stream(seed as u64, 0xB000_0002);
    let items: Vec<serde_json::Value> = (0..n_points)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n_points as f64;
            let z = (u.clone() * theta.cos() + v.clone() * theta.sin()) * radius;
            let g = decode(m, &z, DecodeMode::Greedy, &mut decode_rng);
            let mut val = graph_json(&g, &m.spec);
            val["theta"] = serde_json::json!(theta);
            val
        })
        .collect();
    serde_json::json!(items).to_string()
}

/// Stochastic decodes of `count` draws from the unit-Gaussian prior.
#[wasm_bindgen]
pub fn prior_samples(seed: u32, count: u32) -> String {
    let m = model();
    let d = m.dims.d_z;
    let items: Vec<serde_json::Value> = (0..count)
        .map(|i| {
            let mut rng = rng_stream(seed as u64, 0xB100_0000 + i as u64);
            let z = Array1::from_shape_fn(d, |_| standard_normal(&mut rng));
            let g = decode(m, &z, DecodeMode::Sample, &mut rng);
            graph_json(&g, &m.spec)
        })
        .collect();
    serde_json::json!(items).to_string()
}

/// Greedy decodes along the latent segment between two graphs of the
/// embedded space, endpoints included. Indices address `model_info`'s
/// `space` array.
#[wasm_bindgen]
pub fn interpolate(index_a: u32, index_b: u32, steps: u32) -> String {
    let m = model();
    let graphs = space();
    let (Some(a), Some(b)) = (
        graphs.get(index_a as usize),
        graphs.get(index_b as usize),
    ) else {
        return serde_json::json!({
            "error": format!("indices must be below {}", graphs.len())
        })
        .to_string();
    };
    let za = encode_mean_vec(m, a);
    let zb = encode_mean_vec(m, b);
    let steps = steps.max(2);
    let mut rng = rng_stream(0, 0xB200_0000);
    let items: Vec<serde_json::Value> = (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            let z = &za * (1.0 - t) + &zb * t;
            let g = decode(m, &z, DecodeMode::Greedy, &mut rng);
            let mut val = graph_json(&g, &m.spec);
            val["t"] = serde_json::json!(t);
            val
        })
        .collect();
    serde_json::json!(items).to_string()
}
