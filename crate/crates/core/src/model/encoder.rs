//! Two-sided message-passing encoder producing the variational posterior
//! parameters (mean, log-variance) of a graph.

use ndarray::{Array1, Array2};

use crate::diff::{gru_cell, Id, Tape};
use crate::graph::{canonicalize, ArchGraph, ISO_NODE_LIMIT};

use super::ModelParams;

/// Directional per-node states for one message-passing round.
pub struct NodeStates {
    pub fwd: Vec<Id>,
    pub bwd: Vec<Id>,
}

/// Posterior parameters as tape nodes (1 x d_z rows).
pub struct GraphEmbedding {
    pub mean: Id,
    pub log_var: Id,
}

fn embed_row(tape: &mut Tape, model: &ModelParams, table: crate::diff::ParamId, row: usize) -> Id {
    // Row lookup as one-hot x table keeps the embedding differentiable.
    let vocab = model.reg.value(table).nrows();
    let mut onehot = Array2::zeros((1, vocab));
    onehot[(0, row)] = 1.0;
    let oh = tape.constant(onehot);
    let t = tape.param(&model.reg, table);
    tape.matmul(oh, t)
}

/// Round-0 states: both directional states equal the type's embedding row
/// (the shared sum-node row in edge-labeled mode).
pub fn init_node_states(tape: &mut Tape, model: &ModelParams, g: &ArchGraph) -> NodeStates {
    let mut fwd = Vec::with_capacity(g.node_count());
    let mut bwd = Vec::with_capacity(g.node_count());
    for v in 0..g.node_count() {
        let row = if model.is_edge_mode() { 0 } else { g.node_types()[v] };
        assert!(
            row < model.reg.value(model.enc.embed).nrows(),
            "unknown op type {row}"
        );
        let state = embed_row(tape, model, model.enc.embed, row);
        fwd.push(state);
        bwd.push(state);
    }
    NodeStates { fwd, bwd }
}

fn message(
    tape: &mut Tape,
    model: &ModelParams,
    w: crate::diff::ParamId,
    b: crate::diff::ParamId,
    first: Id,
    second: Id,
    edge_emb: Option<Id>,
) -> Id {
    let mut x = tape.concat_cols(first, second);
    if let Some(e) = edge_emb {
        x = tape.concat_cols(x, e);
    }
    let wv = tape.param(&model.reg, w);
    let bv = tape.param(&model.reg, b);
    let xw = tape.matmul(x, wv);
    tape.add(xw, bv)
}

/// One round of bidirectional aggregation and GRU update. Nodes with empty
/// neighborhoods receive a zero aggregate.
pub fn propagate(
    tape: &mut Tape,
    model: &ModelParams,
    g: &ArchGraph,
    states: &NodeStates,
) -> NodeStates {
    let d = model.dims.d_node;
    let n = g.node_count();
    let mut next_fwd = Vec::with_capacity(n);
    let mut next_bwd = Vec::with_capacity(n);
    for v in 0..n {
        let edge_emb = |tape: &mut Tape, u: usize, w: usize| {
            model.enc.edge_embed.map(|table| {
                let op = g.edge_types().expect("edge-labeled graph")[&(u, w)];
                embed_row(tape, model, table, op)
            })
        };
        // Forward: sum over in-neighbors of f->(h_u, h_v).
        let mut agg_f: Option<Id> = None;
        for u in g.in_neighbors(v) {
            let e = edge_emb(tape, u, v);
            let m = message(tape, model, model.enc.msg_fwd_w, model.enc.msg_fwd_b, states.fwd[u], states.fwd[v], e);
            agg_f = Some(match agg_f {
                Some(a) => tape.add(a, m),
                None => m,
            });
        }
        let agg_f = agg_f.unwrap_or_else(|| tape.constant(Array2::zeros((1, d))));
        next_fwd.push(gru_cell(tape, &model.reg, agg_f, states.fwd[v], &model.enc.gru_fwd));

        // Backward: sum over out-neighbors of f<-(h_v, h_u).
        let mut agg_b: Option<Id> = None;
        for u in g.out_neighbors(v) {
            let e = edge_emb(tape, v, u);
            let m = message(tape, model, model.enc.msg_bwd_w, model.enc.msg_bwd_b, states.bwd[v], states.bwd[u], e);
            agg_b = Some(match agg_b {
                Some(a) => tape.add(a, m),
                None => m,
            });
        }
        let agg_b = agg_b.unwrap_or_else(|| tape.constant(Array2::zeros((1, d))));
        next_bwd.push(gru_cell(tape, &model.reg, agg_b, states.bwd[v], &model.enc.gru_bwd));
    }
    NodeStates {
        fwd: next_fwd,
        bwd: next_bwd,
    }
}

/// Gated-sum graph aggregation over concatenated directional states; the
/// second head produces the log-variance.
pub fn aggregate_graph(tape: &mut Tape, model: &ModelParams, states: &NodeStates) -> GraphEmbedding {
    let gated = |tape: &mut Tape, h: Id, phi_w, phi_b, psi_w, psi_b| {
        let pw = tape.param(&model.reg, phi_w);
        let pb = tape.param(&model.reg, phi_b);
        let hw = tape.matmul(h, pw);
        let pre = tape.add(hw, pb);
        let gate = tape.sigmoid(pre);
        let sw = tape.param(&model.reg, psi_w);
        let sb = tape.param(&model.reg, psi_b);
        let hv = tape.matmul(h, sw);
        let lin = tape.add(hv, sb);
        tape.hadamard(gate, lin)
    };
    let e = &model.enc;
    let mut mean: Option<Id> = None;
    let mut log_var: Option<Id> = None;
    for v in 0..states.fwd.len() {
        let h = tape.concat_cols(states.fwd[v], states.bwd[v]);
        let m = gated(tape, h, e.mean_phi_w, e.mean_phi_b, e.mean_psi_w, e.mean_psi_b);
        let lv = gated(tape, h, e.var_phi_w, e.var_phi_b, e.var_psi_w, e.var_psi_b);
        mean = Some(match mean {
            Some(acc) => tape.add(acc, m),
            None => m,
        });
        log_var = Some(match log_var {
            Some(acc) => tape.add(acc, lv),
            None => lv,
        });
    }
    GraphEmbedding {
        mean: mean.expect("graph has nodes"),
        log_var: log_var.expect("graph has nodes"),
    }
}

/// Full encoding: init, K propagation rounds, gated aggregation. Graphs small
/// enough for the canonicalization budget are canonicalized first so that
/// isomorphic inputs produce bitwise-identical embeddings.
pub fn encode(tape: &mut Tape, model: &ModelParams, g: &ArchGraph) -> GraphEmbedding {
    let canon;
    let g = if g.node_count() <= ISO_NODE_LIMIT {
        canon = canonicalize(g);
        &canon
    } else {
        g
    };
    let mut states = init_node_states(tape, model, g);
    for _ in 0..model.dims.rounds {
        states = propagate(tape, model, g, &states);
    }
    aggregate_graph(tape, model, &states)
}

/// Reparameterized sample `mean + exp(log_var / 2) * eps`; gradients flow to
/// both posterior parameters.
pub fn reparam_sample(tape: &mut Tape, emb: &GraphEmbedding, eps: &Array1<f64>) -> Id {
    let eps2 = tape.constant(eps.clone().insert_axis(ndarray::Axis(0)));
    let half = tape.scale(emb.log_var, 0.5);
    let std = tape.exp(half);
    let noise = tape.hadamard(std, eps2);
    tape.add(emb.mean, noise)
}

/// Posterior mean as a plain vector (throwaway tape).
pub fn encode_mean_vec(model: &ModelParams, g: &ArchGraph) -> Array1<f64> {
    let mut tape = Tape::new();
    let emb = encode(&mut tape, model, g);
    tape.value(emb.mean).row(0).to_owned()
}

/// Posterior (mean, log_var) as plain vectors.
pub fn encode_posterior_vec(model: &ModelParams, g: &ArchGraph) -> (Array1<f64>, Array1<f64>) {
    let mut tape = Tape::new();
    let emb = encode(&mut tape, model, g);
    (
        tape.value(emb.mean).row(0).to_owned(),
        tape.value(emb.log_var).row(0).to_owned(),
    )
}
