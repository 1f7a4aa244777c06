//! Performance prediction from latent means: a four-layer MLP head trained
//! jointly with the encoder on squared error, plus deterministic ranking.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diff::{DiffError, Id, Tape};
use crate::graph::ArchGraph;
use crate::model::encoder::encode;
use crate::model::ModelParams;
use crate::trainer::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::util::{par_map, rng_stream};

#[derive(Debug, Clone)]
pub struct LabeledPoint {
    pub graph: ArchGraph,
    /// Accuracy in [0, 1].
    pub target: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Applies the predictor head to a latent row on `tape`: fc layers with ReLU
/// between, linear scalar output.
pub fn predict_head(tape: &mut Tape, model: &ModelParams, z: Id) -> Id {
    let mut h = z;
    let last = model.pred.layers.len() - 1;
    for (i, &(w, b)) in model.pred.layers.iter().enumerate() {
        h = crate::diff::linear(tape, &model.reg, h, w, b);
        if i < last {
            h = tape.relu(h);
        }
    }
    h
}

/// Deterministic prediction for a graph: encoder posterior mean through the
/// predictor head. Unclamped; clamp to [0,1] at reporting time if needed.
pub fn predict(model: &ModelParams, g: &ArchGraph) -> f64 {
    let mut tape = Tape::new();
    let emb = encode(&mut tape, model, g);
    let out = predict_head(&mut tape, model, emb.mean);
    tape.scalar(out)
}

/// Squared-error loss node for one labeled point; gradients reach both the
/// encoder and the predictor head.
pub fn prediction_loss(tape: &mut Tape, model: &ModelParams, g: &ArchGraph, target: f64) -> Id {
    let emb = encode(tape, model, g);
    let pred = predict_head(tape, model, emb.mean);
    let t = tape.constant(Array2::from_elem((1, 1), target));
    let diff = tape.sub(pred, t);
    let sq = tape.hadamard(diff, diff);
    tape.sum_all(sq)
}

/// Joint supervised fine-tuning on squared error (no reconstruction term).
/// Returns the per-epoch mean training MSE.
pub fn fine_tune(
    model: &mut ModelParams,
    labeled: &[LabeledPoint],
    cfg: &FineTuneConfig,
) -> Result<Vec<f64>, DiffError> {
    assert!(!labeled.is_empty(), "empty labeled set");
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        order.shuffle(&mut rng_stream(cfg.seed, 0x6000_0000 + epoch as u64));

        let mut epoch_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let shared: &ModelParams = model;
            let items: Vec<&LabeledPoint> = chunk.iter().map(|&i| &labeled[i]).collect();
            let results = par_map(items, |p| {
                let mut tape = Tape::new();
                let loss = prediction_loss(&mut tape, shared, &p.graph, p.target);
                let value = tape.scalar(loss);
                let grads = tape.backward(loss)?;
                Ok::<_, DiffError>((grads, value))
            });
            let weight = 1.0 / chunk.len() as f64;
            model.reg.zero_grads();
            for r in results {
                let (grads, value) = r?;
                model.reg.accumulate(&grads, weight);
                epoch_sum += value;
            }
            model
                .reg
                .adam_step(cfg.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        }
        curve.push(epoch_sum / labeled.len() as f64);
    }
    Ok(curve)
}

/// Mean squared error of predictions over a labeled set.
pub fn mse(model: &ModelParams, points: &[LabeledPoint]) -> f64 {
    let items: Vec<&LabeledPoint> = points.iter().collect();
    let sum: f64 = par_map(items, |p| {
        let d = predict(model, &p.graph) - p.target;
        d * d
    })
    .into_iter()
    .sum();
    sum / points.len() as f64
}

/// Spearman rank correlation between predictions and targets.
pub fn spearman(model: &ModelParams, points: &[LabeledPoint]) -> f64 {
    let preds: Vec<f64> = points.iter().map(|p| predict(model, &p.graph)).collect();
    let targets: Vec<f64> = points.iter().map(|p| p.target).collect();
    spearman_of(&preds, &targets)
}

/// Spearman correlation of two equal-length samples (midranks for ties).
pub fn spearman_of(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = midranks(a);
    let rb = midranks(b);
    pearson(&ra, &rb)
}

fn midranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Scores candidates and returns the `top_k` best as (graph, prediction),
/// descending by prediction, ties broken by canonical-form order. The result
/// is independent of input order.
pub fn rank_candidates(
    model: &ModelParams,
    candidates: &[ArchGraph],
    top_k: usize,
) -> Vec<(ArchGraph, f64)> {
    let items: Vec<&ArchGraph> = candidates.iter().collect();
    let mut scored: Vec<(ArchGraph, f64, String)> = par_map(items, |g| {
        (g.clone(), predict(model, g), g.canonical_key())
    });
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite predictions")
            .then_with(|| a.2.cmp(&b.2))
    });
    scored
        .into_iter()
        .take(top_k)
        .map(|(g, p, _)| (g, p))
        .collect()
}
