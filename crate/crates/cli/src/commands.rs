//! One function per subcommand. All artifacts land in the `--out` directory
//! under fixed names; every function is deterministic for a fixed config and
//! seed except the timestamp header line on CSVs and the BO wallclock
//! column.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde_json::json;

use dagvae_core::bo::{bo_loop, BoConfig};
use dagvae_core::checkpoint::{load_model, save_model};
use dagvae_core::diff::pca_project;
use dagvae_core::gp::GpConfig;
use dagvae_core::graph::{deserialize_record, expand_graph, serialize_record};
use dagvae_core::metrics::{
    greedy_reconstruction_accuracy, prior_metrics, reconstruction_accuracy, AbilityReport,
};
use dagvae_core::model::decoder::{decode, DecodeMode};
use dagvae_core::model::encoder::encode_mean_vec;
use dagvae_core::model::ModelParams;
use dagvae_core::predictor::{fine_tune, mse, predict, rank_candidates, spearman, FineTuneConfig, LabeledPoint};
use dagvae_core::synth::eval_target;
use dagvae_core::trainer::{split_dataset, standard_normal, train as train_model, TrainConfig};
use rand::seq::SliceRandom;
use dagvae_core::util::rng_stream;
use dagvae_core::ArchGraph;

use crate::config::ExperimentConfig;
use crate::dataset::{graphs_only, ingest_file, resolve};
use crate::export::{fmt_f64, write_csv, write_file, write_json};
use crate::CliError;

const STREAM_LABEL_SPLIT: u64 = 0x8000_0001;
const STREAM_BO_SEEDS: u64 = 0x8000_0002;
const STREAM_WALK_PLANE: u64 = 0xA000_0001;

fn load_checkpoint(cfg: &ExperimentConfig) -> Result<ModelParams, CliError> {
    let path = cfg.checkpoint_path()?;
    if !path.exists() {
        return Err(CliError::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    load_model(path).map_err(|e| CliError::Runtime(format!("checkpoint {}: {e}", path.display())))
}

fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    let section = cfg.train.clone().unwrap_or_default();
    TrainConfig {
        epochs: section.epochs,
        batch_size: section.batch_size,
        learning_rate: section.learning_rate,
        alpha: section.alpha,
        seed: cfg.seed,
        dims: section.dims(),
        test_fraction: section.test_fraction,
    }
}

pub fn ingest(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("ingest needs a \"data\" section".into()))?;
    let outcome = ingest_file(&data.path, &spec)?;

    let mut lines = String::new();
    for (g, metrics) in &outcome.kept {
        lines.push_str(&serialize_record(g, &spec, metrics.as_ref()));
        lines.push('\n');
    }
    write_file(&out.join("kept.jsonl"), &lines)?;

    let (train_idx, val_idx) = split_dataset(outcome.kept.len(), 0.1, cfg.seed);
    write_json(
        &out.join("ingest_report.json"),
        &json!({
            "read": outcome.read,
            "invalid": outcome.invalid,
            "duplicates": outcome.duplicates,
            "kept": outcome.kept.len(),
            "seed": cfg.seed,
            "train_indices": train_idx,
            "val_indices": val_idx,
        }),
    )
}

pub fn train(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let dataset = graphs_only(&resolve(cfg, &spec)?);
    let tc = train_config(cfg);
    let result = train_model(&spec, &dataset, &tc)
        .map_err(|e| CliError::Runtime(format!("training failed: {e}")))?;

    save_model(&out.join("model.json"), &result.model)
        .map_err(|e| CliError::Runtime(format!("cannot save checkpoint: {e}")))?;

    let rows: Vec<String> = result
        .logs
        .iter()
        .map(|log| {
            let l = &log.loss;
            format!(
                "{},{},{},{},{},{},{}",
                log.epoch,
                fmt_f64(l.node_fwd),
                fmt_f64(l.edge_fwd),
                fmt_f64(l.node_bwd),
                fmt_f64(l.edge_bwd),
                fmt_f64(l.kl),
                fmt_f64(l.total)
            )
        })
        .collect();
    write_csv(
        &out.join("loss.csv"),
        "epoch,node_fwd,edge_fwd,node_bwd,edge_bwd,kl,total",
        &rows,
    )?;
    write_json(
        &out.join("split.json"),
        &json!({
            "seed": cfg.seed,
            "test_fraction": tc.test_fraction,
            "train_indices": result.train_indices,
            "test_indices": result.test_indices,
        }),
    )
}

pub fn eval_abilities(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let model = load_checkpoint(cfg)?;
    let dataset = graphs_only(&resolve(cfg, &spec)?);
    let section = cfg.metrics.clone().unwrap_or_default();
    let test_fraction = cfg
        .train
        .clone()
        .unwrap_or_default()
        .test_fraction;

    // The same seeded split the training command used.
    let (train_idx, test_idx) = split_dataset(dataset.len(), test_fraction, cfg.seed);
    let train_set: Vec<ArchGraph> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let test_set: Vec<ArchGraph> = test_idx.iter().map(|&i| dataset[i].clone()).collect();

    let accuracy =
        reconstruction_accuracy(&model, &test_set, section.n_z, section.n_decode, cfg.seed);
    let greedy = greedy_reconstruction_accuracy(&model, &test_set);
    let ((validity, uniqueness, novelty), decode_log) = prior_metrics(
        &model,
        &train_set,
        section.n_prior,
        section.n_decode,
        cfg.seed,
    );

    let report = AbilityReport {
        accuracy: Some(accuracy),
        validity,
        uniqueness,
        novelty,
        n_test: test_set.len(),
        n_z: section.n_z,
        n_prior: section.n_prior,
        n_decode: section.n_decode,
    };
    let mut value = serde_json::to_value(&report)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    value["greedy_accuracy"] = json!(greedy);
    write_json(&out.join("abilities.json"), &value)?;

    let mut log_lines = String::new();
    for entry in &decode_log {
        log_lines.push_str(
            &serde_json::to_string(entry)
                .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?,
        );
        log_lines.push('\n');
    }
    write_file(&out.join("decode_log.jsonl"), &log_lines)
}

/// Labeled points for predictor-style commands: tabular metrics when the
/// dataset has them, the configured synthetic target otherwise.
fn labeled_points(
    cfg: &ExperimentConfig,
    spec: &dagvae_core::SearchSpaceSpec,
    target_name: &Option<String>,
) -> Result<Vec<LabeledPoint>, CliError> {
    let dataset = resolve(cfg, spec)?;
    let target = cfg.synth_target(target_name)?;
    Ok(dataset
        .into_iter()
        .map(|(graph, metrics)| {
            let value = match &metrics {
                Some(m) => m.val_acc,
                None => eval_target(target, &graph, spec),
            };
            LabeledPoint {
                graph,
                target: value,
            }
        })
        .collect())
}

pub fn finetune_predict(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let mut model = load_checkpoint(cfg)?;
    let section = cfg.finetune.clone().unwrap_or_default();
    let points = labeled_points(cfg, &spec, &section.target)?;

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng_stream(cfg.seed, STREAM_LABEL_SPLIT));
    let n_labeled = ((points.len() as f64 * section.label_fraction).ceil() as usize)
        .clamp(1, points.len());
    let labeled: Vec<LabeledPoint> = order[..n_labeled].iter().map(|&i| points[i].clone()).collect();
    let held_out: Vec<LabeledPoint> = order[n_labeled..].iter().map(|&i| points[i].clone()).collect();

    let ft = FineTuneConfig {
        epochs: section.epochs,
        batch_size: section.batch_size,
        learning_rate: section.learning_rate,
        seed: cfg.seed,
    };
    let curve = fine_tune(&mut model, &labeled, &ft)
        .map_err(|e| CliError::Runtime(format!("fine-tuning failed: {e}")))?;
    save_model(&out.join("model_finetuned.json"), &model)
        .map_err(|e| CliError::Runtime(format!("cannot save checkpoint: {e}")))?;

    let eval_set = if held_out.is_empty() { &labeled } else { &held_out };
    write_json(
        &out.join("mse_report.json"),
        &json!({
            "n_labeled": labeled.len(),
            "n_held_out": held_out.len(),
            "labeled_mse": mse(&model, &labeled),
            "held_out_mse": mse(&model, eval_set),
            "held_out_spearman": spearman(&model, eval_set),
            "curve": curve,
        }),
    )?;

    let rows: Vec<String> = eval_set
        .iter()
        .map(|p| {
            format!(
                "{},{},{}",
                p.graph.canonical_hash(),
                fmt_f64(predict(&model, &p.graph)),
                fmt_f64(p.target)
            )
        })
        .collect();
    write_csv(&out.join("predictions.csv"), "canonical_hash,predicted,true", &rows)
}

pub fn bo(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let model = load_checkpoint(cfg)?;
    let section = cfg.bo.clone().unwrap_or_default();
    let points = labeled_points(cfg, &spec, &section.target)?;

    let lookup: BTreeMap<String, f64> = points
        .iter()
        .map(|p| (p.graph.canonical_key(), p.target))
        .collect();
    let oracle = |g: &ArchGraph| -> Option<(f64, f64)> {
        lookup.get(&g.canonical_key()).map(|&v| (v, v))
    };

    let pool: Vec<ArchGraph> = points.iter().map(|p| p.graph.clone()).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng_stream(cfg.seed, STREAM_BO_SEEDS));
    let seed_set: Vec<ArchGraph> = order
        .iter()
        .take(section.seed_count.max(1))
        .map(|&i| pool[i].clone())
        .collect();

    let bo_cfg = BoConfig {
        iterations: section.iterations,
        batch_size: section.batch_size,
        seed: cfg.seed,
        gp: GpConfig {
            m_inducing: section.m_inducing,
            opt_iters: section.opt_iters,
            seed: cfg.seed,
            ..GpConfig::default()
        },
        prior_pool: section.prior_pool,
    };
    let state = bo_loop(&model, &oracle, &seed_set, &pool, &bo_cfg)
        .map_err(|e| CliError::Runtime(format!("search failed: {e}")))?;

    let rows: Vec<String> = state
        .history
        .iter()
        .map(|log| {
            format!(
                "{},{},{},{},{:.3}",
                log.iteration,
                log.evaluations_so_far,
                fmt_f64(log.best_val),
                fmt_f64(log.best_test),
                log.wallclock_s
            )
        })
        .collect();
    write_csv(
        &out.join("bo_history.csv"),
        "iteration,evaluations_so_far,best_val,best_test,wallclock_s",
        &rows,
    )
}

pub fn extrapolate(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let model = load_checkpoint(cfg)?;
    let section = cfg
        .extrapolate
        .clone()
        .ok_or_else(|| CliError::Config("extrapolate needs an \"extrapolate\" section".into()))?;

    let seed_line = match (&section.seed_record, &section.seed_path) {
        (Some(value), _) => value.to_string(),
        (None, Some(path)) => read_first_line(path)?,
        (None, None) => {
            return Err(CliError::Config(
                "extrapolate needs \"seed_record\" or \"seed_path\"".into(),
            ))
        }
        };
    let (seed_graph, _) = deserialize_record(&seed_line, &spec)
        .map_err(|e| CliError::Runtime(format!("bad seed record: {e}")))?;

    let expanded = expand_graph(&seed_graph, seed_graph.node_count() + 1, &spec)
        .map_err(|e| CliError::Runtime(format!("expansion failed: {e}")))?;
    let ranked = rank_candidates(&model, &expanded, section.top_k.min(expanded.len()));

    let rows: Vec<String> = ranked
        .iter()
        .enumerate()
        .map(|(rank, (g, pred))| {
            format!(
                "{},{},{},{}",
                rank + 1,
                g.canonical_hash(),
                g.node_count(),
                fmt_f64(*pred)
            )
        })
        .collect();
    write_csv(
        &out.join("expansions.csv"),
        "rank,canonical_hash,nodes,predicted",
        &rows,
    )
}

fn read_first_line(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .find(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .ok_or_else(|| CliError::Runtime(format!("{} is empty", path.display())))
}

pub fn project_latent(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let model = load_checkpoint(cfg)?;
    let target_name = cfg.finetune.clone().unwrap_or_default().target;
    let points = labeled_points(cfg, &spec, &target_name)?;
    if points.len() < 3 {
        return Err(CliError::Runtime(
            "latent projection needs at least 3 points".into(),
        ));
    }

    let latents: Vec<Vec<f64>> = points
        .iter()
        .map(|p| encode_mean_vec(&model, &p.graph).to_vec())
        .collect();
    let pca = pca_project(&latents, 2)
        .map_err(|e| CliError::Runtime(format!("projection failed: {e}")))?;

    let rows: Vec<String> = points
        .iter()
        .zip(&pca.coords)
        .map(|(p, coord)| {
            format!(
                "{},{},{},{}",
                p.graph.canonical_hash(),
                fmt_f64(coord[0]),
                fmt_f64(coord[1]),
                fmt_f64(p.target)
            )
        })
        .collect();
    write_csv(
        &out.join("projection.csv"),
        "canonical_hash,pc1,pc2,true_acc",
        &rows,
    )
}

pub fn circle_walk(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
    let spec = cfg.space()?;
    let model = load_checkpoint(cfg)?;
    let section = cfg.walk.clone().unwrap_or_default();
    if section.n_points == 0 {
        return Err(CliError::Config("walk.n_points must be positive".into()));
    }
    let d = model.dims.d_z;
    if d < 2 {
        return Err(CliError::Runtime(
            "circle walk needs a latent dimension of at least 2".into(),
        ));
    }

    // Two seeded orthonormal directions spanning the walk plane.
    let mut rng = rng_stream(cfg.seed, STREAM_WALK_PLANE);
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

    let mut lines = String::new();
    let mut decode_rng = rng_stream(cfg.seed, STREAM_WALK_PLANE + 1);
    for i in 0..section.n_points {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / section.n_points as f64;
        let z = (u.clone() * theta.cos() + v.clone() * theta.sin()) * section.radius;
        let g = decode(&model, &z, DecodeMode::Greedy, &mut decode_rng);
        let record = serialize_record(&g, &spec, None);
        let mut value: serde_json::Value = serde_json::from_str(&record)
            .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
        value["index"] = json!(i);
        value["theta"] = json!(theta);
        lines.push_str(
            &serde_json::to_string(&value)
                .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?,
        );
        lines.push('\n');
    }
    write_file(&out.join("walk.jsonl"), &lines)
}
