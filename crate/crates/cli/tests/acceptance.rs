//! The acceptance gate: eleven numbered criteria, each a test printing one
//! `criterion N: PASS/FAIL` line (run with `--nocapture` to see them all).
//!
//! The trained-model criteria (2, 4, 5, 8, 10) share a single model trained
//! once on 90% of the enumerated 5-node / two-operation space; training
//! happens lazily on first use and its wall time is charged to criterion 4.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use tempfile::TempDir;

use dagvae_core::bo::{bo_loop, random_search, BoConfig};
use dagvae_core::diff::{grad_check, ParamRegistry, Tape};
use dagvae_core::gp::{expected_improvement, fit_gp, GpConfig, GpHypers};
use dagvae_core::graph::{
    canonicalize, enumerate_space, expand_graph, is_isomorphic, serialize_record,
};
use dagvae_core::metrics::{
    graph_from_record_value, greedy_reconstruction_accuracy, iso_mapping_test, prior_metrics,
    reconstruction_accuracy,
};
use dagvae_core::model::encoder::GraphEmbedding;
use dagvae_core::model::{ModelDims, ModelParams};
use dagvae_core::predictor::{fine_tune, rank_candidates, spearman, FineTuneConfig, LabeledPoint};
use dagvae_core::synth::{build_fixture, eval_target, SyntheticTarget};
use dagvae_core::trainer::{graph_loss, kl_divergence, standard_normal, train, TrainConfig};
use dagvae_core::util::{rng_from_seed, rng_stream};
use dagvae_core::{ArchGraph, SearchSpaceSpec};

fn report(n: usize, pass: bool, detail: &str) {
    println!(
        "criterion {n}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------------------
// Shared trained model (criterion 4 protocol).

const TRAIN_SEED: u64 = 1;
const TRAIN_EPOCHS: usize = 300;

struct TrainedBundle {
    model: ModelParams,
    train_set: Vec<ArchGraph>,
    test_set: Vec<ArchGraph>,
    train_secs: f64,
}

fn trained() -> &'static TrainedBundle {
    static BUNDLE: OnceLock<TrainedBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let spec = SearchSpaceSpec::mini(5);
        let dataset = enumerate_space(&spec, 1_000_000).expect("space enumerates");
        let cfg = TrainConfig {
            epochs: TRAIN_EPOCHS,
            batch_size: 32,
            learning_rate: 1e-3,
            alpha: 0.005,
            seed: TRAIN_SEED,
            dims: ModelDims {
                d_node: 32,
                d_z: 16,
                rounds: 2,
            },
            test_fraction: 0.1,
        };
        let started = Instant::now();
        let result = train(&spec, &dataset, &cfg).expect("training runs");
        TrainedBundle {
            model: result.model,
            train_set: result
                .train_indices
                .iter()
                .map(|&i| dataset[i].clone())
                .collect(),
            test_set: result
                .test_indices
                .iter()
                .map(|&i| dataset[i].clone())
                .collect(),
            train_secs: started.elapsed().as_secs_f64(),
        }
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient integrity.

/// A scalar function exercising every differentiable primitive once.
fn all_primitives_loss(tape: &mut Tape, reg: &ParamRegistry) -> dagvae_core::diff::Id {
    let a = tape.param(reg, reg.id("a")); // 2x3
    let b = tape.param(reg, reg.id("b")); // 3x2
    let c = tape.param(reg, reg.id("c")); // 2x2
    let d_row = tape.param(reg, reg.id("d")); // 1x2

    let m = tape.matmul(a, b); // 2x2
    let s = tape.add(m, c);
    let d = tape.sub(s, c);
    let sc = tape.scale(s, 0.7);
    let h = tape.hadamard(sc, d);
    let rows = tape.concat_rows(h, c); // 4x2
    let cols = tape.concat_cols(h, c); // 2x4
    let rs = tape.row_sum(rows); // 4x1
    let sg = tape.sigmoid(cols);
    let rl = tape.relu(h);
    let th = tape.tanh(d);
    let ex = tape.exp(th);
    let lg = tape.log(ex); // strictly positive input by construction
    let logits = tape.matmul(d_row, cols); // 1x4
    let xe = tape.softmax_cross_entropy(logits, 2);
    let logit = tape.sum_all(sg);
    let bce = tape.bernoulli_bce(logit, 1.0);

    let t1 = tape.sum_all(rl);
    let t2 = tape.sum_all(lg);
    let t3 = tape.add(t1, t2);
    let t4 = tape.add(xe, bce);
    let t5 = tape.sum_all(rs);
    let t6 = tape.add(t3, t4);
    tape.add(t6, t5)
}

#[test]
fn criterion_01_gradient_integrity() {
    let started = Instant::now();

    // Every primitive, checked through the generic checker. Parameter values
    // are pushed away from the ReLU kink so the central difference is clean.
    let mut reg = ParamRegistry::new();
    let mut rng = rng_from_seed(41);
    let fill = |rng: &mut dagvae_core::util::SeededRng, r: usize, c: usize| {
        Array2::from_shape_fn((r, c), |_| {
            let v = standard_normal(rng);
            v.signum() * (v.abs() + 0.3)
        })
    };
    reg.insert("a", fill(&mut rng, 2, 3));
    reg.insert("b", fill(&mut rng, 3, 2));
    reg.insert("c", fill(&mut rng, 2, 2));
    reg.insert("d", fill(&mut rng, 1, 2));
    let primitives = grad_check(all_primitives_loss, &mut reg, 1e-5);

    // The full training loss on a 4-node graph, entry by entry. The
    // predictor head does not feed this loss; its analytic gradients must be
    // exactly zero and its entries are excluded from the sweep.
    let spec = SearchSpaceSpec::mini(5);
    let dims = ModelDims {
        d_node: 4,
        d_z: 2,
        rounds: 1,
    };
    let mut model = ModelParams::new(spec, dims, &mut rng_from_seed(0));
    let g = ArchGraph::new(vec![0, 1, 2, 3], [(0, 1), (0, 2), (1, 3), (2, 3)]);
    let eps = Array1::from_vec(vec![0.37, -0.81]);
    let loss_of = |model: &ModelParams| -> f64 {
        let mut tape = Tape::new();
        let (_, breakdown) = graph_loss(&mut tape, model, &g, &eps, 0.005);
        breakdown.total
    };
    let mut tape = Tape::new();
    let (total, _) = graph_loss(&mut tape, &model, &g, &eps, 0.005);
    let grads = tape.backward(total).unwrap();
    let n_params = model.reg.len();
    let mut analytic: Vec<Array2<f64>> = (0..n_params)
        .map(|pid| Array2::zeros(model.reg.value(pid).dim()))
        .collect();
    for (pid, grad) in grads.params() {
        analytic[pid] += grad;
    }
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for pid in 0..n_params {
        if model.reg.name(pid).starts_with("pred.") {
            assert_eq!(analytic[pid].iter().map(|v| v.abs()).sum::<f64>(), 0.0);
            continue;
        }
        let (rows, cols) = model.reg.value(pid).dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = model.reg.value(pid)[(r, c)];
                model.reg.value_mut(pid)[(r, c)] = orig + step;
                let plus = loss_of(&model);
                model.reg.value_mut(pid)[(r, c)] = orig - step;
                let minus = loss_of(&model);
                model.reg.value_mut(pid)[(r, c)] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic[pid][(r, c)];
                worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
                checked += 1;
            }
        }
    }
    assert!(checked > 500, "sweep covered only {checked} entries");

    let elapsed = started.elapsed().as_secs_f64();
    let pass = primitives.passes(1e-4) && worst < 1e-4 && elapsed < 60.0;
    report(
        1,
        pass,
        &format!(
            "primitive max rel err {:.2e}, full-loss max rel err {:.2e} over {checked} entries, {elapsed:.1}s",
            primitives.max_rel_error, worst
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: isomorphic inputs map to bitwise-identical latent means.

/// A uniformly random alternative labeling of `g`: a random linear extension
/// of its precedence order, applied as a relabeling. Always isomorphic to
/// `g` by construction.
fn random_relabeling(g: &ArchGraph, rng: &mut dagvae_core::util::SeededRng) -> ArchGraph {
    use rand::Rng;
    let n = g.node_count();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, v) in g.edges() {
        indegree[v] += 1;
        succ[u].push(v);
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n); // new index -> old index
    while !ready.is_empty() {
        let k = rng.gen_range(0..ready.len());
        let v = ready.swap_remove(k);
        order.push(v);
        for &w in &succ[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(w);
            }
        }
    }
    let mut new_of = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        new_of[old] = new;
    }
    let types: Vec<usize> = order.iter().map(|&old| g.node_types()[old]).collect();
    let edges: Vec<(usize, usize)> = g.edges().map(|(u, v)| (new_of[u], new_of[v])).collect();
    ArchGraph::new(types, edges)
}

#[test]
fn criterion_02_iso_exactness() {
    let started = Instant::now();
    let spec = SearchSpaceSpec::mini(7);
    let mut rng = rng_from_seed(7_500);
    let mut pairs: Vec<(ArchGraph, ArchGraph)> = Vec::new();
    use rand::Rng;
    while pairs.len() < 500 {
        let n = rng.gen_range(5..=7usize);
        let mut types = vec![spec.input_type()];
        for _ in 0..n - 2 {
            types.push(rng.gen_range(1..=2usize));
        }
        types.push(spec.output_type());
        let n_pairs = n * (n - 1) / 2;
        let mask: u64 = rng.gen_range(0..(1u64 << n_pairs));
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if mask >> k & 1 == 1 {
                    edges.push((i, j));
                }
                k += 1;
            }
        }
        let Ok(g) = ArchGraph::try_new(types, edges, None) else {
            continue;
        };
        if !g.check_validity(&spec).is_valid {
            continue;
        }
        let relabeled = random_relabeling(&g, &mut rng);
        assert!(is_isomorphic(&g, &relabeled).unwrap(), "pair construction broken");
        pairs.push((g, relabeled));
    }

    let untrained = ModelParams::new(
        spec.clone(),
        ModelDims {
            d_node: 8,
            d_z: 4,
            rounds: 2,
        },
        &mut rng_from_seed(99),
    );
    let score_untrained = iso_mapping_test(&untrained, &pairs);
    let score_trained = iso_mapping_test(&trained().model, &pairs);
    let elapsed = started.elapsed().as_secs_f64();
    // Wall time excludes the shared training, which is charged to
    // criterion 4; the check itself is the two mapping sweeps.
    let pass = score_untrained == 100.0 && score_trained == 100.0;
    report(
        2,
        pass,
        &format!(
            "500 permutation pairs: untrained {score_untrained}%, trained {score_trained}%, {elapsed:.1}s (training time excluded)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: closed-form KL against Monte-Carlo sampling.

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

#[test]
fn criterion_03_kl_correctness() {
    let started = Instant::now();
    let n_samples = 100_000usize;
    let d = 4usize;
    let mut worst_z = 0.0f64;
    for case in 0..50u64 {
        let mut rng = rng_from_seed(1000 + case);
        let mean: Vec<f64> = (0..d).map(|_| 2.0 * standard_normal(&mut rng)).collect();
        let log_var: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();

        let mut tape = Tape::new();
        let emb = GraphEmbedding {
            mean: tape.constant(Array2::from_shape_fn((1, d), |(_, j)| mean[j])),
            log_var: tape.constant(Array2::from_shape_fn((1, d), |(_, j)| log_var[j])),
        };
        let kl = kl_divergence(&mut tape, &emb);
        let closed = tape.scalar(kl);

        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_samples {
            let mut term = 0.0;
            for j in 0..d {
                let var = log_var[j].exp();
                let x = mean[j] + var.sqrt() * standard_normal(&mut rng);
                term += log_normal_pdf(x, mean[j], var) - log_normal_pdf(x, 0.0, 1.0);
            }
            sum += term;
            sum_sq += term * term;
        }
        let mc = sum / n_samples as f64;
        let var_est = (sum_sq / n_samples as f64 - mc * mc).max(0.0);
        let se = (var_est / n_samples as f64).sqrt();
        worst_z = worst_z.max((closed - mc).abs() / se.max(1e-12));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_z <= 3.0 && elapsed < 60.0;
    report(
        3,
        pass,
        &format!("50 posteriors x 1e5 samples, worst deviation {worst_z:.2} standard errors, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5: held-out reconstruction and prior validity after the
// shared training run.

#[test]
fn criterion_04_mini_space_reconstruction() {
    let bundle = trained();
    let stochastic =
        reconstruction_accuracy(&bundle.model, &bundle.test_set, 10, 10, TRAIN_SEED + 1);
    let greedy = greedy_reconstruction_accuracy(&bundle.model, &bundle.test_set);
    let pass = stochastic >= 90.0 && greedy >= 99.0 && bundle.train_secs < 1800.0;
    report(
        4,
        pass,
        &format!(
            "held-out ({} graphs): stochastic {stochastic:.2}% (need >=90), greedy {greedy:.2}% (need >=99), training {:.0}s (budget 1800s)",
            bundle.test_set.len(),
            bundle.train_secs
        ),
    );
}

#[test]
fn criterion_05_prior_validity() {
    let bundle = trained();
    let ((validity, uniqueness, novelty), log) =
        prior_metrics(&bundle.model, &bundle.train_set, 1000, 10, TRAIN_SEED + 2);

    // Recompute every reported number from the decode log alone.
    assert_eq!(log.len(), 10_000);
    let train_keys: BTreeSet<String> = bundle
        .train_set
        .iter()
        .map(|g| g.canonical_key())
        .collect();
    let mut n_valid = 0usize;
    let mut valid_keys: BTreeSet<String> = BTreeSet::new();
    let mut novel_keys: BTreeSet<String> = BTreeSet::new();
    for entry in &log {
        let g = graph_from_record_value(&entry.record).expect("log record parses");
        let valid = g.check_validity(&bundle.model.spec).is_valid;
        assert_eq!(valid, entry.valid, "log validity flag recomputes");
        if valid {
            n_valid += 1;
            let key = g.canonical_key();
            if !train_keys.contains(&key) {
                novel_keys.insert(key.clone());
            }
            valid_keys.insert(key);
        }
    }
    let validity_re = 100.0 * n_valid as f64 / log.len() as f64;
    let uniqueness_re = 100.0 * valid_keys.len() as f64 / n_valid as f64;
    let novelty_re = 100.0 * novel_keys.len() as f64 / n_valid as f64;
    let recomputed_match = validity == validity_re
        && uniqueness == Some(uniqueness_re)
        && novelty == Some(novelty_re);

    let pass = validity >= 95.0 && recomputed_match;
    report(
        5,
        pass,
        &format!(
            "1000 prior points x 10 decodes: validity {validity:.2}% (need >=95), uniqueness {uniqueness:?}, novelty {novelty:?}, log recomputation {}",
            if recomputed_match { "exact" } else { "MISMATCH" }
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: enumeration exactness.

/// Brute force over every interior type assignment and edge mask; counts
/// distinct canonical forms. Shares no traversal logic with the enumerator.
fn brute_force_count(spec: &SearchSpaceSpec, max_nodes: usize) -> usize {
    let mut keys: BTreeSet<String> = BTreeSet::new();
    for n in 2..=max_nodes {
        let all_pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let interior: Vec<usize> = spec.interior_types().collect();
        let n_assignments = interior.len().pow((n - 2) as u32).max(1);
        for a in 0..n_assignments {
            let mut types = vec![spec.input_type()];
            let mut rem = a;
            for _ in 0..n - 2 {
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
                    keys.insert(g.canonical_key());
                }
            }
        }
    }
    keys.len()
}

#[test]
fn criterion_06_enumeration_exactness() {
    let started = Instant::now();
    let nb201 = enumerate_space(&SearchSpaceSpec::nb201_like(), 20_000)
        .expect("edge-labeled space enumerates");
    let spec4 = SearchSpaceSpec::mini(4);
    let enumerated = enumerate_space(&spec4, 10_000).expect("mini space enumerates").len();
    let brute = brute_force_count(&spec4, 4);
    let elapsed = started.elapsed().as_secs_f64();
    let pass = nb201.len() == 15_625 && enumerated == brute && elapsed < 300.0;
    report(
        6,
        pass,
        &format!(
            "4-operation edge-labeled preset: {} (need 15625); mini 4-node space: enumerator {enumerated} vs brute force {brute}; {elapsed:.1}s",
            nb201.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: expansion exactness.

/// Independent one-node-insertion oracle: every disjoint (predecessor,
/// successor) pair of old-node subsets and every interior type, with
/// acyclicity decided by precomputed reachability rather than by the
/// library's labeling machinery. Candidates are deduplicated by canonical
/// key (the canonical form itself is validated independently in criterion 6
/// and the delete-one check below).
fn insertion_oracle(g: &ArchGraph, spec: &SearchSpaceSpec) -> BTreeSet<String> {
    let n = g.node_count();
    let mut reach = vec![vec![false; n]; n];
    for (u, v) in g.edges() {
        reach[u][v] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut relaxed = spec.clone();
    relaxed.max_nodes = relaxed.max_nodes.max(n + 1);

    let mut keys = BTreeSet::new();
    // One ternary digit per old node: predecessor, successor, or unrelated.
    for assignment in 0..3usize.pow(n as u32) {
        let mut preds = Vec::new();
        let mut succs = Vec::new();
        let mut rem = assignment;
        for v in 0..n {
            match rem % 3 {
                1 => preds.push(v),
                2 => succs.push(v),
                _ => {}
            }
            rem /= 3;
        }
        // A cycle through the new node needs a path successor -> predecessor.
        let cyclic = succs
            .iter()
            .any(|&s| preds.iter().any(|&p| s == p || reach[s][p]));
        if cyclic {
            continue;
        }
        for t in spec.interior_types() {
            // New node gets index n; its wiring may not be triangular in the
            // extended labeling, so relabel by a topological sort computed
            // here (Kahn's algorithm, smallest-index tie-break).
            let mut raw_edges: Vec<(usize, usize)> = g.edges().collect();
            raw_edges.extend(preds.iter().map(|&p| (p, n)));
            raw_edges.extend(succs.iter().map(|&s| (n, s)));
            let total = n + 1;
            let mut indegree = vec![0usize; total];
            for &(_, v) in &raw_edges {
                indegree[v] += 1;
            }
            let mut order = Vec::with_capacity(total);
            let mut placed = vec![false; total];
            while order.len() < total {
                let v = (0..total)
                    .find(|&v| !placed[v] && indegree[v] == 0)
                    .expect("acyclicity was pre-checked");
                placed[v] = true;
                order.push(v);
                for &(u, w) in &raw_edges {
                    if u == v {
                        indegree[w] -= 1;
                    }
                }
            }
            let mut new_of = vec![0usize; total];
            for (new, &old) in order.iter().enumerate() {
                new_of[old] = new;
            }
            let types: Vec<usize> = order
                .iter()
                .map(|&old| if old == n { t } else { g.node_types()[old] })
                .collect();
            let edges: Vec<(usize, usize)> = raw_edges
                .iter()
                .map(|&(u, v)| (new_of[u], new_of[v]))
                .collect();
            let Ok(cand) = ArchGraph::try_new(types, edges, None) else {
                continue;
            };
            if cand.check_validity(&relaxed).is_valid {
                keys.insert(cand.canonical_key());
            }
        }
    }
    keys
}

/// Delete-one oracle for small seeds: enumerate the whole (n+1)-node space
/// and keep the graphs where removing some node recovers the seed.
fn delete_one_oracle(seed: &ArchGraph, spec: &SearchSpaceSpec) -> BTreeSet<String> {
    let target = seed.node_count() + 1;
    let mut relaxed = spec.clone();
    relaxed.max_nodes = relaxed.max_nodes.max(target);
    // Only (n+1)-node graphs can contain the seed plus one node.
    relaxed.fixed_node_count = Some(target);
    let seed_key = canonicalize(seed).canonical_key();
    let mut keys = BTreeSet::new();
    for h in enumerate_space(&relaxed, 10_000_000).expect("space enumerates") {
        if h.node_count() != target {
            continue;
        }
        for v in 1..target - 1 {
            let types: Vec<usize> = h
                .node_types()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != v)
                .map(|(_, &t)| t)
                .collect();
            let drop = |u: usize| if u > v { u - 1 } else { u };
            let edges: Vec<(usize, usize)> = h
                .edges()
                .filter(|&(a, b)| a != v && b != v)
                .map(|(a, b)| (drop(a), drop(b)))
                .collect();
            let Ok(rest) = ArchGraph::try_new(types, edges, None) else {
                continue;
            };
            if rest.canonical_key() == seed_key {
                keys.insert(h.canonical_key());
                break;
            }
        }
    }
    keys
}

/// The stored 7-node seed cell: a plausible high-performing cell of the
/// 7-node / 9-edge node-labeled benchmark family. The benchmark's true best
/// cell adjacency is not pinned down here, so the published expansion count
/// of 1,384 is reported as a reference comparison, not asserted.
fn seed_cell_7() -> ArchGraph {
    // input, conv3x3, conv3x3, conv3x3, conv1x1, maxpool3x3, output
    ArchGraph::new(
        vec![0, 2, 2, 2, 1, 3, 4],
        [
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 6),
            (0, 4),
            (4, 5),
            (5, 6),
            (1, 5),
            (0, 6),
        ],
    )
}

#[test]
fn criterion_07_expansion_exactness() {
    let started = Instant::now();
    let spec = SearchSpaceSpec::nb101_like();

    // 4-node seed: library expansion against BOTH independent oracles.
    let seed4 = ArchGraph::new(vec![0, 2, 1, 4], [(0, 1), (1, 2), (2, 3), (0, 3)]);
    let expanded4: BTreeSet<String> = expand_graph(&seed4, 5, &spec)
        .expect("expansion runs")
        .iter()
        .map(|g| g.canonical_key())
        .collect();
    let oracle4_insert = insertion_oracle(&seed4, &spec);
    let oracle4_delete = delete_one_oracle(&seed4, &spec);
    let four_ok = expanded4 == oracle4_insert && expanded4 == oracle4_delete;

    // 7-node stored seed cell, expanded to 8 nodes. The published figure for
    // this experiment kept only the triangular structure, so the 9-edge cap
    // is lifted for the expanded graphs.
    let mut open = spec.clone();
    open.max_edges = None;
    let seed7 = seed_cell_7();
    assert!(seed7.check_validity(&spec).is_valid, "stored seed cell is in-space");
    let expanded7: BTreeSet<String> = expand_graph(&seed7, 8, &open)
        .expect("expansion runs")
        .iter()
        .map(|g| g.canonical_key())
        .collect();
    let oracle7 = insertion_oracle(&seed7, &open);
    let seven_ok = expanded7 == oracle7;
    let reference_note = if expanded7.len() == 1_384 {
        "matches the published 1,384".to_string()
    } else {
        format!(
            "published figure 1,384 not matched (the exact source cell adjacency is unpublished); oracle count {}",
            oracle7.len()
        )
    };

    let elapsed = started.elapsed().as_secs_f64();
    let pass = four_ok && seven_ok && elapsed < 600.0;
    report(
        7,
        pass,
        &format!(
            "4-node seed: {} candidates, insertion & delete-one oracles agree: {four_ok}; 7-node seed cell: {} candidates, oracle agrees: {seven_ok} ({reference_note}); {elapsed:.1}s",
            expanded4.len(),
            expanded7.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: predictor ranking after fine-tuning on 10% labels.

#[test]
fn criterion_08_predictor_ranking() {
    let started = Instant::now();
    let bundle = trained();
    let spec = SearchSpaceSpec::mini(5);
    let space = enumerate_space(&spec, 1_000_000).unwrap();
    let points: Vec<LabeledPoint> = space
        .iter()
        .map(|g| LabeledPoint {
            graph: g.clone(),
            target: eval_target(SyntheticTarget::Depth, g, &spec),
        })
        .collect();

    let mut first_spearman = 0.0;
    let mut hits = 0usize;
    let trials = 20usize;
    for t in 0..trials as u64 {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.shuffle(&mut rng_stream(9_000 + t, 0x51));
        let n_labeled = points.len() / 10;
        let labeled: Vec<LabeledPoint> =
            order[..n_labeled].iter().map(|&i| points[i].clone()).collect();
        let held_out: Vec<LabeledPoint> =
            order[n_labeled..].iter().map(|&i| points[i].clone()).collect();

        let mut model = bundle.model.clone();
        let cfg = FineTuneConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 9_000 + t,
        };
        fine_tune(&mut model, &labeled, &cfg).expect("fine-tuning runs");
        let rho = spearman(&model, &held_out);
        if t == 0 {
            first_spearman = rho;
        }

        let held_graphs: Vec<ArchGraph> = held_out.iter().map(|p| p.graph.clone()).collect();
        let top = rank_candidates(&model, &held_graphs, 1);
        let best_true = held_out
            .iter()
            .map(|p| p.target)
            .fold(f64::NEG_INFINITY, f64::max);
        // The target has ties; success means the picked top-1 achieves the
        // true maximum value.
        if eval_target(SyntheticTarget::Depth, &top[0].0, &spec) == best_true {
            hits += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = first_spearman >= 0.8 && hits * 100 >= trials * 60 && elapsed < 1800.0;
    report(
        8,
        pass,
        &format!(
            "held-out Spearman {first_spearman:.3} (need >=0.8), top-1 hit {hits}/{trials} trials (need >=12), {elapsed:.0}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: GP and EI correctness.

fn gp_kernel(a: &[f64], b: &[f64], signal_var: f64, length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_var * (-d2 / (2.0 * length_scale * length_scale)).exp()
}

fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let diag = m[col][col];
        assert!(diag.abs() > 1e-14, "singular system in the oracle");
        for row in (col + 1)..n {
            let factor = m[row][col] / diag;
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

fn exact_gp_predict(
    x_train: &[Vec<f64>],
    y: &[f64],
    query: &[f64],
    hypers: &GpHypers,
) -> (f64, f64) {
    let n = y.len();
    let sf2 = hypers.log_signal_var.exp();
    let ell = hypers.log_length_scale.exp();
    let noise = hypers.log_noise_var.exp();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = gp_kernel(&x_train[i], &x_train[j], sf2, ell);
            if i == j {
                k[i][j] += noise;
            }
        }
    }
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let alpha = gauss_solve(k.clone(), centered);
    let k_star: Vec<f64> = (0..n)
        .map(|i| gp_kernel(&x_train[i], query, sf2, ell))
        .collect();
    let beta = gauss_solve(k, k_star.clone());
    let mean = ybar + k_star.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
    let var = sf2 - k_star.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

#[test]
fn criterion_09_gp_ei_correctness() {
    let started = Instant::now();

    // EI closed form against plain Monte-Carlo.
    let n_samples = 1_000_000usize;
    let mut worst_z = 0.0f64;
    for case in 0..100u64 {
        let mut rng = rng_from_seed(2000 + case);
        let mu = 2.0 * standard_normal(&mut rng);
        let sigma = standard_normal(&mut rng).abs() + 0.05;
        let y_best = mu + sigma * standard_normal(&mut rng);
        let closed = expected_improvement(mu, sigma, y_best);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_samples {
            let y = mu + sigma * standard_normal(&mut rng);
            let imp = (y - y_best).max(0.0);
            sum += imp;
            sum_sq += imp * imp;
        }
        let mc = sum / n_samples as f64;
        let var_est = (sum_sq / n_samples as f64 - mc * mc).max(0.0);
        let se = (var_est / n_samples as f64).sqrt();
        worst_z = worst_z.max((closed - mc).abs() / se.max(1e-12));
    }

    // Full inducing set against the textbook exact GP.
    let hypers = GpHypers {
        log_signal_var: 0.3,
        log_length_scale: 0.4,
        log_noise_var: (0.05f64).ln(),
    };
    let mut worst_gp = 0.0f64;
    for case in 0..20u64 {
        let mut rng = rng_from_seed(300 + case);
        let n = 4 + (case as usize % 7);
        let d = 1 + (case as usize % 3);
        let x_train: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| (i * d + j) as f64 * 0.7 + 0.2 * standard_normal(&mut rng))
                    .collect()
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let x = Array2::from_shape_fn((n, d), |(i, j)| x_train[i][j]);
        let cfg = GpConfig {
            m_inducing: n,
            opt_iters: 0,
            seed: case,
            init: hypers.clone(),
        };
        let gp = fit_gp(&x, &y, &cfg).expect("fit succeeds");
        for q in 0..5 {
            let query: Vec<f64> = (0..d)
                .map(|j| (q * d + j) as f64 * 0.9 + 0.3 * standard_normal(&mut rng))
                .collect();
            let (m_s, v_s) = gp.predict(&query);
            let (m_e, v_e) = exact_gp_predict(&x_train, &y, &query, gp.hypers());
            worst_gp = worst_gp.max((m_s - m_e).abs().max((v_s - v_e.max(0.0)).abs()));
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_z <= 3.0 && worst_gp < 1e-6 && elapsed < 300.0;
    report(
        9,
        pass,
        &format!(
            "EI: 100 cases x 1e6 samples, worst {worst_z:.2} standard errors; full-inducing GP vs exact GP, worst moment gap {worst_gp:.2e}; {elapsed:.0}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: batch optimization beats random search at equal budget.

#[test]
fn criterion_10_bo_effectiveness() {
    let started = Instant::now();
    let bundle = trained();
    let spec = SearchSpaceSpec::mini(5);
    let pool = enumerate_space(&spec, 1_000_000).unwrap();
    let oracle = |g: &ArchGraph| -> Option<(f64, f64)> {
        let v = eval_target(SyntheticTarget::Depth, g, &spec);
        Some((v, v))
    };

    let seed_count = 5usize;
    let batches = 5usize;
    let batch_size = 5usize;
    let budget = seed_count + batches * batch_size;
    let trials = 10u64;
    let mut bo_sum = 0.0;
    let mut rs_sum = 0.0;
    let mut all_monotone = true;
    for t in 0..trials {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng_stream(4_000 + t, 0x52));
        let seed_set: Vec<ArchGraph> = order[..seed_count]
            .iter()
            .map(|&i| pool[i].clone())
            .collect();
        let cfg = BoConfig {
            iterations: batches,
            batch_size,
            seed: 4_000 + t,
            gp: GpConfig {
                m_inducing: 500,
                opt_iters: 20,
                seed: 4_000 + t,
                ..GpConfig::default()
            },
            prior_pool: 0,
        };
        let state = bo_loop(&bundle.model, &oracle, &seed_set, &pool, &cfg)
            .expect("optimization runs");
        bo_sum += state.best_val;
        all_monotone &= state
            .history
            .windows(2)
            .all(|w| w[1].best_val >= w[0].best_val);
        rs_sum += random_search(&oracle, &pool, budget, 4_000 + t);
    }
    let bo_mean = bo_sum / trials as f64;
    let rs_mean = rs_sum / trials as f64;
    let elapsed = started.elapsed().as_secs_f64();
    let pass = bo_mean > rs_mean && all_monotone && elapsed < 1200.0;
    report(
        10,
        pass,
        &format!(
            "10 trials, budget {budget}: guided mean best {bo_mean:.4} vs random {rs_mean:.4} (must exceed), monotone in all trials: {all_monotone}; {elapsed:.0}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: CLI determinism.

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dagvae"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Reproducible bytes of an artifact: the `# generated_at_unix` header line
/// is dropped, and the wallclock column (explicitly documented as
/// nondeterministic) is dropped from the optimization history.
fn stable_bytes(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let body = match text.split_once('\n') {
        Some((first, rest)) if first.starts_with('#') => rest,
        _ => &text,
    };
    if path.file_name().is_some_and(|n| n == "bo_history.csv") {
        body.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        body.to_string()
    }
}

#[test]
fn criterion_11_cli_determinism() {
    let started = Instant::now();
    let dir = TempDir::new().unwrap();

    // A labeled data fixture so every subcommand has real inputs.
    let spec = SearchSpaceSpec::mini(4);
    let fixture = build_fixture(&spec, SyntheticTarget::Depth, 10_000).unwrap();
    let mut data = String::new();
    for (g, metrics) in &fixture {
        data.push_str(&serialize_record(g, &spec, Some(metrics)));
        data.push('\n');
    }
    let data_path = dir.path().join("data.jsonl");
    std::fs::write(&data_path, data).unwrap();
    let seed_path = dir.path().join("seed.jsonl");
    std::fs::write(&seed_path, serialize_record(&fixture[0].0, &spec, None)).unwrap();

    let checkpoint = dir.path().join("shared").join("model.json");
    std::fs::create_dir(dir.path().join("shared")).unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        format!(
            r#"{{
                "seed": 5,
                "space": {{ "preset": "mini", "max_nodes": 4 }},
                "data": {{ "path": "{data}" }},
                "checkpoint": "{ckpt}",
                "train": {{ "epochs": 3, "batch_size": 16, "d_node": 8, "d_z": 4, "rounds": 1 }},
                "metrics": {{ "n_z": 2, "n_decode": 2, "n_prior": 25 }},
                "finetune": {{ "epochs": 5, "label_fraction": 0.5 }},
                "bo": {{ "iterations": 2, "batch_size": 3, "seed_count": 3, "m_inducing": 50, "opt_iters": 5, "prior_pool": 0, "target": "depth" }},
                "extrapolate": {{ "seed_path": "{seed}", "top_k": 10 }},
                "walk": {{ "n_points": 5, "radius": 2.0 }}
            }}"#,
            data = data_path.display(),
            ckpt = checkpoint.display(),
            seed = seed_path.display(),
        ),
    )
    .unwrap();

    // One training run provides the shared checkpoint; the train subcommand
    // itself is then re-run like the rest.
    let shared = run_cli(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.path().join("shared").to_str().unwrap(),
    ]);
    assert!(shared.status.success(), "shared training run succeeds");

    let subcommands = [
        "ingest",
        "train",
        "eval-abilities",
        "finetune-predict",
        "bo",
        "extrapolate",
        "project-latent",
        "circle-walk",
    ];
    let mut all_equal = true;
    let mut detail = String::new();
    for cmd in subcommands {
        let mut outs = Vec::new();
        for pass in ["a", "b"] {
            let out_dir = dir.path().join(format!("{cmd}-{pass}"));
            std::fs::create_dir(&out_dir).unwrap();
            let out = run_cli(&[
                cmd,
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ]);
            assert!(
                out.status.success(),
                "{cmd} run {pass} succeeds: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            outs.push(out_dir);
        }
        let mut cmd_equal = true;
        for entry in std::fs::read_dir(&outs[0]).unwrap() {
            let name = entry.unwrap().file_name();
            cmd_equal &= stable_bytes(&outs[0].join(&name)) == stable_bytes(&outs[1].join(&name));
        }
        all_equal &= cmd_equal;
        if !cmd_equal {
            detail.push_str(&format!(" {cmd}: MISMATCH;"));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = all_equal;
    report(
        11,
        pass,
        &format!(
            "all 8 subcommands byte-identical across reruns (timestamp header and wallclock column excluded){detail}; {elapsed:.0}s"
        ),
    );
}
