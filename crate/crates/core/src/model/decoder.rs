//! Two-sided sequential decoder: forward generation from the input node,
//! backward generation from the output node, and edge-set union.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::diff::{gru_cell, sigmoid_scalar, Id, ParamId, Tape};
use crate::graph::{canonicalize, ArchGraph};
use crate::util::SeededRng;

use super::{Direction, DecoderIds, ModelParams};

/// Node budget beyond which decoded fragments are returned in generation
/// order instead of canonical order (canonical search is brute-force).
const CANON_DECODE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// A directionally generated graph in generation-index space: node 0 is the
/// direction's start node, edges run (j, t) with j < t.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub types: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    /// Edge operations (edge-labeled spaces only).
    pub edge_ops: BTreeMap<(usize, usize), usize>,
    /// True when max_steps hit before the end type was drawn.
    pub truncated: bool,
}

/// Per-decision records of a teacher-forced pass; the loss terms stay on the
/// tape for backward.
#[derive(Debug, Default)]
pub struct StepLosses {
    pub node_terms: Vec<Id>,
    pub edge_terms: Vec<Id>,
}

/// Ground-truth decision sequence for teacher forcing, direction-local.
#[derive(Debug, Clone)]
pub struct TeacherSeq {
    pub start_type: usize,
    /// Generation-vocabulary index per generated node.
    pub node_targets: Vec<usize>,
    /// Per generated node, one target per candidate predecessor j = 0..=t:
    /// for node-labeled graphs 0/1 bits; for edge-labeled graphs the edge-op
    /// index with "no edge" encoded as the vocabulary size.
    pub edge_targets: Vec<Vec<usize>>,
}

/// Builds the teacher sequence of a canonical graph for one direction. The
/// backward sequence is the reversed node order with edges reversed.
pub fn teacher_sequence(g: &ArchGraph, model: &ModelParams, dir: Direction) -> TeacherSeq {
    let n = g.node_count();
    let spec = &model.spec;
    let orig = |gen_pos: usize| match dir {
        Direction::Forward => gen_pos,
        Direction::Backward => n - 1 - gen_pos,
    };
    let mut node_targets = Vec::with_capacity(n - 1);
    let mut edge_targets = Vec::with_capacity(n - 1);
    for t in 0..n - 1 {
        let o_new = orig(t + 1);
        let target = if model.is_edge_mode() {
            if t + 1 == n - 1 {
                1
            } else {
                0
            }
        } else {
            dir.gen_index(spec, g.node_types()[o_new])
        };
        node_targets.push(target);
        let mut row = Vec::with_capacity(t + 1);
        for j in 0..=t {
            let o_j = orig(j);
            let (a, b) = if o_j < o_new { (o_j, o_new) } else { (o_new, o_j) };
            if model.is_edge_mode() {
                let none = spec.op_vocabulary.len();
                row.push(match g.edge_types().and_then(|et| et.get(&(a, b))) {
                    Some(&op) => op,
                    None => none,
                });
            } else {
                row.push(g.has_edge(a, b) as usize);
            }
        }
        edge_targets.push(row);
    }
    TeacherSeq {
        start_type: dir.start_type(spec),
        node_targets,
        edge_targets,
    }
}

enum Driver<'a> {
    Teacher(&'a TeacherSeq),
    Free { mode: DecodeMode, rng: &'a mut SeededRng },
}

fn fc2(tape: &mut Tape, model: &ModelParams, ids: super::Fc2Ids, x: Id) -> Id {
    crate::diff::fc2_relu(tape, &model.reg, x, ids.w1, ids.b1, ids.w2, ids.b2)
}

fn embed_row(tape: &mut Tape, model: &ModelParams, table: ParamId, row: usize) -> Id {
    let vocab = model.reg.value(table).nrows();
    let mut onehot = Array2::zeros((1, vocab));
    onehot[(0, row)] = 1.0;
    let oh = tape.constant(onehot);
    let t = tape.param(&model.reg, table);
    tape.matmul(oh, t)
}

fn decoder_embed_row(model: &ModelParams, ty: usize, is_end: bool) -> usize {
    if model.is_edge_mode() {
        usize::from(is_end)
    } else {
        ty
    }
}

fn argmax(row: &Array2<f64>) -> usize {
    let mut best = 0;
    for i in 1..row.ncols() {
        if row[(0, i)] > row[(0, best)] {
            best = i;
        }
    }
    best
}

fn sample_categorical(row: &Array2<f64>, rng: &mut SeededRng) -> usize {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// One bidirectional propagation round over the partial graph followed by the
/// gated aggregation that refreshes the partial-graph embedding.
fn refresh_partial_embedding(
    tape: &mut Tape,
    model: &ModelParams,
    ids: &DecoderIds,
    states: &mut Vec<Id>,
    edges: &[(usize, usize)],
    edge_ops: &BTreeMap<(usize, usize), usize>,
) -> Id {
    let d = model.dims.d_node;
    let n = states.len();
    let mut next = Vec::with_capacity(n);
    for v in 0..n {
        let mut agg: Option<Id> = None;
        let add_msg = |tape: &mut Tape, agg: &mut Option<Id>, w, b, first: Id, second: Id, key: (usize, usize)| {
            let mut x = tape.concat_cols(first, second);
            if let Some(table) = ids.edge_embed {
                let op = edge_ops[&key];
                let e = embed_row(tape, model, table, op);
                x = tape.concat_cols(x, e);
            }
            let wv = tape.param(&model.reg, w);
            let bv = tape.param(&model.reg, b);
            let xw = tape.matmul(x, wv);
            let m = tape.add(xw, bv);
            *agg = Some(match *agg {
                Some(a) => tape.add(a, m),
                None => m,
            });
        };
        for &(i, j) in edges {
            if j == v {
                add_msg(tape, &mut agg, ids.msg_fwd_w, ids.msg_fwd_b, states[i], states[v], (i, j));
            }
            if i == v {
                add_msg(tape, &mut agg, ids.msg_bwd_w, ids.msg_bwd_b, states[v], states[j], (i, j));
            }
        }
        let agg = agg.unwrap_or_else(|| tape.constant(Array2::zeros((1, d))));
        next.push(gru_cell(tape, &model.reg, agg, states[v], &ids.gru));
    }
    *states = next;

    let mut h_g: Option<Id> = None;
    for &h in states.iter() {
        let pw = tape.param(&model.reg, ids.agg_phi_w);
        let pb = tape.param(&model.reg, ids.agg_phi_b);
        let hw = tape.matmul(h, pw);
        let pre = tape.add(hw, pb);
        let gate = tape.sigmoid(pre);
        let sw = tape.param(&model.reg, ids.agg_psi_w);
        let sb = tape.param(&model.reg, ids.agg_psi_b);
        let hv = tape.matmul(h, sw);
        let lin = tape.add(hv, sb);
        let term = tape.hadamard(gate, lin);
        h_g = Some(match h_g {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    h_g.expect("partial graph has nodes")
}

/// Runs one directional generation loop. In teacher mode the decision count
/// and choices come from the ground truth and loss terms are recorded; in
/// free mode choices are greedy or sampled and `max_steps` bounds the node
/// count (the end node is forcibly appended at the cap).
fn decode_directional(
    tape: &mut Tape,
    model: &ModelParams,
    z: Id,
    dir: Direction,
    mut driver: Driver,
    max_steps: usize,
) -> (Fragment, StepLosses) {
    assert!(max_steps >= 2, "max_steps must allow at least two nodes");
    let ids = match dir {
        Direction::Forward => &model.dec_fwd,
        Direction::Backward => &model.dec_bwd,
    };
    let spec = &model.spec;
    let mut losses = StepLosses::default();

    let start_type = dir.start_type(spec);
    let start_row = decoder_embed_row(model, start_type, false);
    let emb0 = embed_row(tape, model, ids.embed, start_row);
    let x0 = tape.concat_cols(z, emb0);
    let h0 = fc2(tape, model, ids.init_start, x0);

    let mut states = vec![h0];
    let mut types = vec![start_type];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut edge_ops: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut h_g = z;
    let mut truncated = false;

    let end_gen = if model.is_edge_mode() {
        1
    } else {
        dir.gen_index(spec, dir.end_type(spec))
    };
    let step_cap = match &driver {
        Driver::Teacher(seq) => seq.node_targets.len(),
        Driver::Free { .. } => max_steps - 1,
    };

    for t in 0..step_cap {
        // Node-type decision.
        let zx = tape.concat_cols(z, h_g);
        let logits = fc2(tape, model, ids.add_node, zx);
        let chosen = match &mut driver {
            Driver::Teacher(seq) => {
                let target = seq.node_targets[t];
                losses.node_terms.push(tape.softmax_cross_entropy(logits, target));
                target
            }
            Driver::Free { mode, rng } => {
                let mut c = match mode {
                    DecodeMode::Greedy => argmax(tape.value(logits)),
                    DecodeMode::Sample => sample_categorical(tape.value(logits), rng),
                };
                if t == step_cap - 1 && c != end_gen {
                    c = end_gen;
                    truncated = true;
                }
                c
            }
        };
        let is_end = chosen == end_gen;
        let new_type = if model.is_edge_mode() {
            0
        } else {
            dir.type_of_gen_index(spec, chosen)
        };

        // Initialize the new node's state.
        let emb = embed_row(tape, model, ids.embed, decoder_embed_row(model, new_type, is_end));
        let zg = tape.concat_cols(z, h_g);
        let x = tape.concat_cols(zg, emb);
        let h_new = fc2(tape, model, ids.init_node, x);

        // Edge decisions towards every prior node.
        let new_idx = states.len();
        for (j, &h_j) in states.iter().enumerate() {
            let pair = tape.concat_cols(h_new, h_j);
            let ctx = tape.concat_cols(h_g, z);
            let x = tape.concat_cols(pair, ctx);
            let out = fc2(tape, model, ids.add_edge, x);
            if model.is_edge_mode() {
                let none_idx = spec.op_vocabulary.len();
                let choice = match &mut driver {
                    Driver::Teacher(seq) => {
                        let target = seq.edge_targets[t][j];
                        losses.edge_terms.push(tape.softmax_cross_entropy(out, target));
                        target
                    }
                    Driver::Free { mode, rng } => match mode {
                        DecodeMode::Greedy => argmax(tape.value(out)),
                        DecodeMode::Sample => sample_categorical(tape.value(out), rng),
                    },
                };
                if choice != none_idx {
                    edges.push((j, new_idx));
                    edge_ops.insert((j, new_idx), choice);
                }
            } else {
                let take = match &mut driver {
                    Driver::Teacher(seq) => {
                        let target = seq.edge_targets[t][j];
                        losses
                            .edge_terms
                            .push(tape.bernoulli_bce(out, target as f64));
                        target == 1
                    }
                    Driver::Free { mode, rng } => {
                        let score = sigmoid_scalar(tape.value(out)[(0, 0)]);
                        match mode {
                            DecodeMode::Greedy => score > 0.5,
                            DecodeMode::Sample => rng.gen::<f64>() < score,
                        }
                    }
                };
                if take {
                    edges.push((j, new_idx));
                }
            }
        }
        states.push(h_new);
        types.push(new_type);

        h_g = refresh_partial_embedding(tape, model, ids, &mut states, &edges, &edge_ops);
        if is_end {
            if let Driver::Free { .. } = driver {
                break;
            }
        }
    }

    (
        Fragment {
            types,
            edges,
            edge_ops,
            truncated,
        },
        losses,
    )
}

/// Teacher-forced pass over both directions; returns the per-direction loss
/// terms left on the tape.
pub fn teacher_forced_losses(
    tape: &mut Tape,
    model: &ModelParams,
    z: Id,
    g: &ArchGraph,
) -> (StepLosses, StepLosses) {
    let seq_f = teacher_sequence(g, model, Direction::Forward);
    let seq_b = teacher_sequence(g, model, Direction::Backward);
    let n = g.node_count();
    let (_, loss_f) = decode_directional(tape, model, z, Direction::Forward, Driver::Teacher(&seq_f), n + 1);
    let (_, loss_b) = decode_directional(tape, model, z, Direction::Backward, Driver::Teacher(&seq_b), n + 1);
    (loss_f, loss_b)
}

/// Free-running generation of one directional fragment.
pub fn decode_fragment(
    tape: &mut Tape,
    model: &ModelParams,
    z: Id,
    dir: Direction,
    mode: DecodeMode,
    rng: &mut SeededRng,
    max_steps: usize,
) -> Fragment {
    let (frag, _) = decode_directional(tape, model, z, dir, Driver::Free { mode, rng }, max_steps);
    frag
}

/// Full decode: union of the forward fragment and the reversed backward
/// fragment. When the two directions disagree on the node count, the forward
/// fragment alone is used. The result is canonicalized when small enough.
pub fn decode(model: &ModelParams, z: &Array1<f64>, mode: DecodeMode, rng: &mut SeededRng) -> ArchGraph {
    let mut tape = Tape::new();
    let zid = tape.constant(z.clone().insert_axis(ndarray::Axis(0)));
    decode_with_tape(&mut tape, model, zid, mode, rng)
}

pub fn decode_with_tape(
    tape: &mut Tape,
    model: &ModelParams,
    z: Id,
    mode: DecodeMode,
    rng: &mut SeededRng,
) -> ArchGraph {
    let max_steps = 2 * model.spec.max_nodes;
    let fwd = decode_fragment(tape, model, z, Direction::Forward, mode, rng, max_steps);
    let bwd = decode_fragment(tape, model, z, Direction::Backward, mode, rng, max_steps);
    union_fragments(model, &fwd, &bwd)
}

/// Union in original orientation: forward node types win; backward edges are
/// index-reflected. Falls back to the forward fragment on length mismatch.
pub fn union_fragments(model: &ModelParams, fwd: &Fragment, bwd: &Fragment) -> ArchGraph {
    let n = fwd.types.len();
    let mut edges: Vec<(usize, usize)> = fwd.edges.clone();
    let mut edge_ops = fwd.edge_ops.clone();
    if bwd.types.len() == n {
        let t = n - 1;
        for &(j, k) in &bwd.edges {
            let mapped = (t - k, t - j);
            if !edges.contains(&mapped) {
                edges.push(mapped);
                if model.is_edge_mode() {
                    edge_ops.insert(mapped, bwd.edge_ops[&(j, k)]);
                }
            }
        }
    }
    let edge_types = model.is_edge_mode().then_some(edge_ops);
    let g = ArchGraph::try_new(fwd.types.clone(), edges, edge_types)
        .expect("fragments are triangular by construction");
    if g.node_count() <= CANON_DECODE_LIMIT {
        canonicalize(&g)
    } else {
        g
    }
}
