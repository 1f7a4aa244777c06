//! Teacher-forced reconstruction + KL training loop.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{DiffError, Id, Tape};
use crate::graph::ArchGraph;
use crate::model::decoder::teacher_forced_losses;
use crate::model::encoder::{encode, reparam_sample, GraphEmbedding};
use crate::model::{ModelDims, ModelParams};
use crate::space::SearchSpaceSpec;
use crate::util::{par_map, rng_from_seed, rng_stream};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight on the KL term.
    pub alpha: f64,
    pub seed: u64,
    pub dims: ModelDims,
    /// Fraction of the dataset held out from training.
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            alpha: 0.005,
            seed: 0,
            dims: ModelDims::default(),
            test_fraction: 0.1,
        }
    }
}

/// Scalar loss components of one graph or one batch (means over graphs).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node_fwd: f64,
    pub edge_fwd: f64,
    pub node_bwd: f64,
    pub edge_bwd: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn add(&mut self, other: &LossBreakdown) {
        self.node_fwd += other.node_fwd;
        self.edge_fwd += other.edge_fwd;
        self.node_bwd += other.node_bwd;
        self.edge_bwd += other.edge_bwd;
        self.kl += other.kl;
        self.total += other.total;
    }

    fn scale(&mut self, w: f64) {
        self.node_fwd *= w;
        self.edge_fwd *= w;
        self.node_bwd *= w;
        self.edge_bwd *= w;
        self.kl *= w;
        self.total *= w;
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

pub struct TrainResult {
    pub model: ModelParams,
    pub logs: Vec<EpochLog>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Closed-form KL divergence of a diagonal Gaussian posterior from the unit
/// Gaussian: -1/2 sum(1 + log var - mean^2 - var).
pub fn kl_divergence(tape: &mut Tape, emb: &GraphEmbedding) -> Id {
    let d = tape.value(emb.mean).ncols();
    let ones = tape.constant(Array2::ones((1, d)));
    let t = tape.add(ones, emb.log_var);
    let m2 = tape.hadamard(emb.mean, emb.mean);
    let t = tape.sub(t, m2);
    let var = tape.exp(emb.log_var);
    let t = tape.sub(t, var);
    let s = tape.sum_all(t);
    tape.scale(s, -0.5)
}

fn sum_terms(tape: &mut Tape, terms: &[Id]) -> Id {
    let mut acc = terms.first().copied();
    for &t in terms.iter().skip(1) {
        acc = Some(tape.add(acc.unwrap(), t));
    }
    acc.unwrap_or_else(|| tape.constant(Array2::zeros((1, 1))))
}

/// Builds the full loss graph for one architecture on `tape` and returns the
/// total-loss node plus the scalar breakdown.
pub fn graph_loss(
    tape: &mut Tape,
    model: &ModelParams,
    g: &ArchGraph,
    eps: &Array1<f64>,
    alpha: f64,
) -> (Id, LossBreakdown) {
    let emb = encode(tape, model, g);
    let kl = kl_divergence(tape, &emb);
    let z = reparam_sample(tape, &emb, eps);
    let (loss_f, loss_b) = teacher_forced_losses(tape, model, z, g);

    let node_fwd = sum_terms(tape, &loss_f.node_terms);
    let edge_fwd = sum_terms(tape, &loss_f.edge_terms);
    let node_bwd = sum_terms(tape, &loss_b.node_terms);
    let edge_bwd = sum_terms(tape, &loss_b.edge_terms);
    let rec_f = tape.add(node_fwd, edge_fwd);
    let rec_b = tape.add(node_bwd, edge_bwd);
    let rec = tape.add(rec_f, rec_b);
    let kl_w = tape.scale(kl, alpha);
    let total = tape.add(rec, kl_w);

    let breakdown = LossBreakdown {
        node_fwd: tape.scalar(node_fwd),
        edge_fwd: tape.scalar(edge_fwd),
        node_bwd: tape.scalar(node_bwd),
        edge_bwd: tape.scalar(edge_bwd),
        kl: tape.scalar(kl),
        total: tape.scalar(total),
    };
    (total, breakdown)
}

/// Deterministic shuffled split into (train, held-out) index sets.
pub fn split_dataset(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng_stream(seed, 0x5011));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.min(n.saturating_sub(1));
    let test = indices.split_off(n - n_test);
    (indices, test)
}

/// Runs one optimizer step over a batch of graphs; returns the mean loss
/// breakdown. Gradients are averaged over the batch.
pub fn train_batch(
    model: &mut ModelParams,
    batch: &[(&ArchGraph, Array1<f64>)],
    cfg: &TrainConfig,
) -> Result<LossBreakdown, DiffError> {
    let shared: &ModelParams = model;
    let items: Vec<(usize, &ArchGraph, &Array1<f64>)> = batch
        .iter()
        .enumerate()
        .map(|(i, (g, eps))| (i, *g, eps))
        .collect();
    let results = par_map(items, |(_, g, eps)| {
        let mut tape = Tape::new();
        let (total, breakdown) = graph_loss(&mut tape, shared, g, eps, cfg.alpha);
        let grads = tape.backward(total)?;
        Ok::<_, DiffError>((grads, breakdown))
    });

    let weight = 1.0 / batch.len() as f64;
    let mut mean = LossBreakdown::default();
    model.reg.zero_grads();
    for r in results {
        let (grads, breakdown) = r?;
        model.reg.accumulate(&grads, weight);
        mean.add(&breakdown);
    }
    mean.scale(weight);
    model
        .reg
        .adam_step(cfg.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
    Ok(mean)
}

/// Trains a fresh model on the index subset `train_indices` of `dataset`.
/// Reparametrization noise is keyed by (seed, epoch, dataset index) so runs
/// are reproducible regardless of thread scheduling.
pub fn train_on(
    spec: &SearchSpaceSpec,
    dataset: &[ArchGraph],
    train_indices: &[usize],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>), DiffError> {
    let mut init_rng = rng_from_seed(cfg.seed);
    let mut model = ModelParams::new(spec.clone(), cfg.dims, &mut init_rng);
    let logs = train_epochs(&mut model, dataset, train_indices, cfg, 0)?;
    Ok((model, logs))
}

/// Continues training an existing model; `epoch_offset` keeps the noise and
/// shuffle streams distinct when resuming.
pub fn train_epochs(
    model: &mut ModelParams,
    dataset: &[ArchGraph],
    train_indices: &[usize],
    cfg: &TrainConfig,
    epoch_offset: usize,
) -> Result<Vec<EpochLog>, DiffError> {
    assert!(!train_indices.is_empty(), "empty training set");
    let d_z = model.dims.d_z;
    let mut logs = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let epoch = epoch_offset + e;
        let mut order = train_indices.to_vec();
        order.shuffle(&mut rng_stream(cfg.seed, 0x1000_0000 + epoch as u64));

        let mut epoch_mean = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<(&ArchGraph, Array1<f64>)> = chunk
                .iter()
                .map(|&i| {
                    let mut rng =
                        rng_stream(cfg.seed, 0x2000_0000 + (epoch as u64) * 1_000_003 + i as u64);
                    let eps = Array1::from_shape_fn(d_z, |_| standard_normal(&mut rng));
                    (&dataset[i], eps)
                })
                .collect();
            let mean = train_batch(model, &batch, cfg)?;
            epoch_mean.add(&mean);
            batches += 1;
        }
        epoch_mean.scale(1.0 / batches as f64);
        logs.push(EpochLog {
            epoch,
            loss: epoch_mean,
        });
    }
    Ok(logs)
}

/// Splits `dataset` 90/10 (per `cfg.test_fraction`) and trains on the large
/// part.
pub fn train(
    spec: &SearchSpaceSpec,
    dataset: &[ArchGraph],
    cfg: &TrainConfig,
) -> Result<TrainResult, DiffError> {
    let (train_indices, test_indices) = split_dataset(dataset.len(), cfg.test_fraction, cfg.seed);
    let (model, logs) = train_on(spec, dataset, &train_indices, cfg)?;
    Ok(TrainResult {
        model,
        logs,
        train_indices,
        test_indices,
    })
}

/// Box-Muller standard normal draw.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoder::encode_mean_vec;
    use crate::model::decoder::{decode, DecodeMode};

    fn tiny_model(spec: &SearchSpaceSpec, seed: u64) -> ModelParams {
        let dims = ModelDims {
            d_node: 8,
            d_z: 4,
            rounds: 2,
        };
        ModelParams::new(spec.clone(), dims, &mut rng_from_seed(seed))
    }

    #[test]
    fn kl_is_zero_at_the_prior() {
        let spec = SearchSpaceSpec::mini(4);
        let model = tiny_model(&spec, 0);
        let mut tape = Tape::new();
        let mean = tape.constant(Array2::zeros((1, 3)));
        let log_var = tape.constant(Array2::zeros((1, 3)));
        let emb = GraphEmbedding { mean, log_var };
        let kl = kl_divergence(&mut tape, &emb);
        assert_eq!(tape.scalar(kl), 0.0);
        let _ = model;
    }

    #[test]
    fn kl_unit_mean_unit_var_is_half() {
        let mut tape = Tape::new();
        let mean = tape.constant(Array2::from_elem((1, 1), 1.0));
        let log_var = tape.constant(Array2::zeros((1, 1)));
        let emb = GraphEmbedding { mean, log_var };
        let kl = kl_divergence(&mut tape, &emb);
        assert!((tape.scalar(kl) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_node_graph_has_one_node_and_one_edge_decision_per_direction() {
        let spec = SearchSpaceSpec::mini(4);
        let model = tiny_model(&spec, 1);
        let g = ArchGraph::new(vec![0, 3], [(0, 1)]);
        let mut tape = Tape::new();
        let emb = encode(&mut tape, &model, &g);
        let (f, b) = teacher_forced_losses(&mut tape, &model, emb.mean, &g);
        assert_eq!(f.node_terms.len(), 1);
        assert_eq!(f.edge_terms.len(), 1);
        assert_eq!(b.node_terms.len(), 1);
        assert_eq!(b.edge_terms.len(), 1);
    }

    #[test]
    fn zero_alpha_total_equals_reconstruction() {
        let spec = SearchSpaceSpec::mini(4);
        let model = tiny_model(&spec, 2);
        let g = ArchGraph::new(vec![0, 1, 3], [(0, 1), (1, 2)]);
        let eps = Array1::zeros(model.dims.d_z);
        let mut tape = Tape::new();
        let (_, bd) = graph_loss(&mut tape, &model, &g, &eps, 0.0);
        let rec = bd.node_fwd + bd.edge_fwd + bd.node_bwd + bd.edge_bwd;
        assert!((bd.total - rec).abs() < 1e-10);
    }

    #[test]
    fn loss_components_sum_to_total() {
        let spec = SearchSpaceSpec::mini(5);
        let model = tiny_model(&spec, 3);
        let g = ArchGraph::new(vec![0, 1, 2, 3], [(0, 1), (0, 2), (1, 3), (2, 3)]);
        let mut rng = rng_from_seed(7);
        let eps = Array1::from_shape_fn(model.dims.d_z, |_| standard_normal(&mut rng));
        let mut tape = Tape::new();
        let (_, bd) = graph_loss(&mut tape, &model, &g, &eps, 0.005);
        let rec = bd.node_fwd + bd.edge_fwd + bd.node_bwd + bd.edge_bwd;
        assert!((bd.total - (rec + 0.005 * bd.kl)).abs() < 1e-10);
        assert!(bd.kl >= 0.0);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (a_train, a_test) = split_dataset(100, 0.1, 42);
        let (b_train, b_test) = split_dataset(100, 0.1, 42);
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        assert_eq!(a_test.len(), 10);
        let mut all: Vec<usize> = a_train.iter().chain(&a_test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn memorizes_a_single_graph() {
        let spec = SearchSpaceSpec::mini(4);
        let g = ArchGraph::new(vec![0, 1, 3], [(0, 1), (1, 2)]);
        let dataset = vec![g.clone()];
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            learning_rate: 1e-3,
            alpha: 0.005,
            seed: 11,
            dims: ModelDims {
                d_node: 8,
                d_z: 4,
                rounds: 2,
            },
            test_fraction: 0.0,
        };
        let (model, logs) = train_on(&spec, &dataset, &[0], &cfg).unwrap();
        assert!(logs.last().unwrap().loss.total < logs[0].loss.total);
        let mean = encode_mean_vec(&model, &g);
        let mut rng = rng_from_seed(0);
        let decoded = decode(&model, &mean, DecodeMode::Greedy, &mut rng);
        assert_eq!(decoded.canonical_key(), g.canonical_key());
    }
}
