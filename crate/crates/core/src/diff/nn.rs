//! Small composite layers built from tape primitives.

use super::registry::{ParamId, ParamRegistry};
use super::tape::{Id, Tape};

/// `x . W + b` for a row vector x.
pub fn linear(tape: &mut Tape, reg: &ParamRegistry, x: Id, w: ParamId, b: ParamId) -> Id {
    let wv = tape.param(reg, w);
    let bv = tape.param(reg, b);
    let xw = tape.matmul(x, wv);
    tape.add(xw, bv)
}

/// Two fc layers with a ReLU in between.
pub fn fc2_relu(
    tape: &mut Tape,
    reg: &ParamRegistry,
    x: Id,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
) -> Id {
    let h = linear(tape, reg, x, w1, b1);
    let h = tape.relu(h);
    linear(tape, reg, h, w2, b2)
}

/// Weight ids for one gated recurrent unit cell.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights {
    pub w_xr: ParamId,
    pub w_hr: ParamId,
    pub b_r: ParamId,
    pub w_xz: ParamId,
    pub w_hz: ParamId,
    pub b_z: ParamId,
    pub w_xc: ParamId,
    pub w_hc: ParamId,
    pub b_c: ParamId,
}

impl GruWeights {
    /// Registers a GRU with input dim `d_in` and state dim `d_h` under a
    /// name prefix.
    pub fn register(
        reg: &mut ParamRegistry,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        scale: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        GruWeights {
            w_xr: reg.insert_uniform(&format!("{prefix}.w_xr"), d_in, d_h, scale, rng),
            w_hr: reg.insert_uniform(&format!("{prefix}.w_hr"), d_h, d_h, scale, rng),
            b_r: reg.insert(&format!("{prefix}.b_r"), ndarray::Array2::zeros((1, d_h))),
            w_xz: reg.insert_uniform(&format!("{prefix}.w_xz"), d_in, d_h, scale, rng),
            w_hz: reg.insert_uniform(&format!("{prefix}.w_hz"), d_h, d_h, scale, rng),
            b_z: reg.insert(&format!("{prefix}.b_z"), ndarray::Array2::zeros((1, d_h))),
            w_xc: reg.insert_uniform(&format!("{prefix}.w_xc"), d_in, d_h, scale, rng),
            w_hc: reg.insert_uniform(&format!("{prefix}.w_hc"), d_h, d_h, scale, rng),
            b_c: reg.insert(&format!("{prefix}.b_c"), ndarray::Array2::zeros((1, d_h))),
        }
    }

    /// Looks the weights up again from a restored registry.
    pub fn lookup(reg: &ParamRegistry, prefix: &str) -> Self {
        GruWeights {
            w_xr: reg.id(&format!("{prefix}.w_xr")),
            w_hr: reg.id(&format!("{prefix}.w_hr")),
            b_r: reg.id(&format!("{prefix}.b_r")),
            w_xz: reg.id(&format!("{prefix}.w_xz")),
            w_hz: reg.id(&format!("{prefix}.w_hz")),
            b_z: reg.id(&format!("{prefix}.b_z")),
            w_xc: reg.id(&format!("{prefix}.w_xc")),
            w_hc: reg.id(&format!("{prefix}.w_hc")),
            b_c: reg.id(&format!("{prefix}.b_c")),
        }
    }
}

/// One GRU step: reset/update gates over (input row, state row), returning
/// the next state row.
pub fn gru_cell(
    tape: &mut Tape,
    reg: &ParamRegistry,
    x: Id,
    h: Id,
    w: &GruWeights,
) -> Id {
    let pre_r = gate_pre(tape, reg, x, h, w.w_xr, w.w_hr, w.b_r);
    let r = tape.sigmoid(pre_r);
    let pre_z = gate_pre(tape, reg, x, h, w.w_xz, w.w_hz, w.b_z);
    let z = tape.sigmoid(pre_z);
    let rh = tape.hadamard(r, h);
    let pre_c = gate_pre(tape, reg, x, rh, w.w_xc, w.w_hc, w.b_c);
    let c = tape.tanh(pre_c);
    // h' = c + z * (h - c)
    let hc = tape.sub(h, c);
    let zhc = tape.hadamard(z, hc);
    tape.add(c, zhc)
}

fn gate_pre(
    tape: &mut Tape,
    reg: &ParamRegistry,
    x: Id,
    h: Id,
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
) -> Id {
    let wx = tape.param(reg, w_x);
    let wh = tape.param(reg, w_h);
    let bv = tape.param(reg, b);
    let xs = tape.matmul(x, wx);
    let hs = tape.matmul(h, wh);
    let s = tape.add(xs, hs);
    tape.add(s, bv)
}
