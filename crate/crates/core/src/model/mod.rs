//! Model parameters and the two-sided encoder/decoder pair.

pub mod decoder;
pub mod encoder;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{GruWeights, ParamId, ParamRegistry};
use crate::space::{LabelMode, SearchSpaceSpec};
use crate::util::SeededRng;

/// Model dimensions. The concatenated node dimension is `2 * d_node`; the
/// latent dimension is `d_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_node: usize,
    pub d_z: usize,
    /// Encoder message-passing rounds (weights shared across rounds).
    pub rounds: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        // 250-dim concatenated node states, 56-dim latent.
        ModelDims {
            d_node: 125,
            d_z: 56,
            rounds: 2,
        }
    }
}

impl ModelDims {
    /// Small dimensions for desk-scale spaces.
    pub fn small() -> Self {
        ModelDims {
            d_node: 32,
            d_z: 16,
            rounds: 2,
        }
    }
}

/// Predictor head widths (four fc layers, scalar output).
pub const PREDICTOR_WIDTHS: [usize; 3] = [128, 128, 64];

#[derive(Debug, Clone)]
pub struct EncoderIds {
    pub embed: ParamId,
    pub edge_embed: Option<ParamId>,
    pub msg_fwd_w: ParamId,
    pub msg_fwd_b: ParamId,
    pub msg_bwd_w: ParamId,
    pub msg_bwd_b: ParamId,
    pub gru_fwd: GruWeights,
    pub gru_bwd: GruWeights,
    pub mean_phi_w: ParamId,
    pub mean_phi_b: ParamId,
    pub mean_psi_w: ParamId,
    pub mean_psi_b: ParamId,
    pub var_phi_w: ParamId,
    pub var_phi_b: ParamId,
    pub var_psi_w: ParamId,
    pub var_psi_b: ParamId,
}

/// A two-layer fc block (fc - ReLU - fc).
#[derive(Debug, Clone, Copy)]
pub struct Fc2Ids {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone)]
pub struct DecoderIds {
    pub embed: ParamId,
    pub edge_embed: Option<ParamId>,
    /// Reduced init module for the start node: (z, type embedding).
    pub init_start: Fc2Ids,
    /// Full init module: (z, partial-graph embedding, type embedding).
    pub init_node: Fc2Ids,
    pub add_node: Fc2Ids,
    pub add_edge: Fc2Ids,
    pub msg_fwd_w: ParamId,
    pub msg_fwd_b: ParamId,
    pub msg_bwd_w: ParamId,
    pub msg_bwd_b: ParamId,
    pub gru: GruWeights,
    pub agg_phi_w: ParamId,
    pub agg_phi_b: ParamId,
    pub agg_psi_w: ParamId,
    pub agg_psi_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct PredictorIds {
    /// (weight, bias) per layer.
    pub layers: Vec<(ParamId, ParamId)>,
}

/// All learnable weights of encoder, both decoders and the predictor head,
/// bound to one registry.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub spec: SearchSpaceSpec,
    pub dims: ModelDims,
    pub reg: ParamRegistry,
    pub enc: EncoderIds,
    pub dec_fwd: DecoderIds,
    pub dec_bwd: DecoderIds,
    pub pred: PredictorIds,
}

/// Either registers fresh parameters or re-binds ids from a restored
/// registry; both paths must name parameters identically.
struct Binder<'a> {
    reg: &'a mut ParamRegistry,
    rng: Option<&'a mut SeededRng>,
}

impl Binder<'_> {
    fn mat(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        match &mut self.rng {
            Some(rng) => {
                let scale = (1.0 / rows as f64).sqrt();
                let value =
                    ndarray::Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale));
                self.reg.insert(name, value)
            }
            None => self.reg.id(name),
        }
    }

    fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        match &self.rng {
            Some(_) => self.reg.insert(name, ndarray::Array2::zeros((rows, cols))),
            None => self.reg.id(name),
        }
    }

    fn gru(&mut self, prefix: &str, d_in: usize, d_h: usize) -> GruWeights {
        match &mut self.rng {
            Some(rng) => {
                let scale = (1.0 / d_in as f64).sqrt();
                GruWeights::register(self.reg, prefix, d_in, d_h, scale, rng)
            }
            None => GruWeights::lookup(self.reg, prefix),
        }
    }

    fn fc2(&mut self, prefix: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Fc2Ids {
        Fc2Ids {
            w1: self.mat(&format!("{prefix}.w1"), d_in, d_hidden),
            b1: self.zeros(&format!("{prefix}.b1"), 1, d_hidden),
            w2: self.mat(&format!("{prefix}.w2"), d_hidden, d_out),
            b2: self.zeros(&format!("{prefix}.b2"), 1, d_out),
        }
    }
}

impl ModelParams {
    pub fn new(spec: SearchSpaceSpec, dims: ModelDims, rng: &mut SeededRng) -> Self {
        let mut reg = ParamRegistry::new();
        let (enc, dec_fwd, dec_bwd, pred) = Self::bind(&mut reg, &spec, dims, Some(rng));
        ModelParams {
            spec,
            dims,
            reg,
            enc,
            dec_fwd,
            dec_bwd,
            pred,
        }
    }

    /// Re-binds cached parameter ids onto a restored registry.
    pub fn from_registry(spec: SearchSpaceSpec, dims: ModelDims, mut reg: ParamRegistry) -> Self {
        let (enc, dec_fwd, dec_bwd, pred) = Self::bind(&mut reg, &spec, dims, None);
        ModelParams {
            spec,
            dims,
            reg,
            enc,
            dec_fwd,
            dec_bwd,
            pred,
        }
    }

    fn bind(
        reg: &mut ParamRegistry,
        spec: &SearchSpaceSpec,
        dims: ModelDims,
        rng: Option<&mut SeededRng>,
    ) -> (EncoderIds, DecoderIds, DecoderIds, PredictorIds) {
        let d = dims.d_node;
        let dz = dims.d_z;
        let edge_mode = spec.label_mode == LabelMode::EdgeLabeled;
        let node_vocab = if edge_mode { 1 } else { spec.op_vocabulary.len() };
        let edge_vocab = if edge_mode { spec.op_vocabulary.len() } else { 0 };
        let msg_in = 2 * d + if edge_mode { d } else { 0 };
        let mut b = Binder { reg, rng };

        let enc = EncoderIds {
            embed: b.mat("enc.embed", node_vocab, d),
            edge_embed: edge_mode.then(|| b.mat("enc.edge_embed", edge_vocab, d)),
            msg_fwd_w: b.mat("enc.msg_fwd.w", msg_in, d),
            msg_fwd_b: b.zeros("enc.msg_fwd.b", 1, d),
            msg_bwd_w: b.mat("enc.msg_bwd.w", msg_in, d),
            msg_bwd_b: b.zeros("enc.msg_bwd.b", 1, d),
            gru_fwd: b.gru("enc.gru_fwd", d, d),
            gru_bwd: b.gru("enc.gru_bwd", d, d),
            mean_phi_w: b.mat("enc.agg_mean.phi.w", 2 * d, dz),
            mean_phi_b: b.zeros("enc.agg_mean.phi.b", 1, dz),
            mean_psi_w: b.mat("enc.agg_mean.psi.w", 2 * d, dz),
            mean_psi_b: b.zeros("enc.agg_mean.psi.b", 1, dz),
            var_phi_w: b.mat("enc.agg_var.phi.w", 2 * d, dz),
            var_phi_b: b.zeros("enc.agg_var.phi.b", 1, dz),
            var_psi_w: b.mat("enc.agg_var.psi.w", 2 * d, dz),
            var_psi_b: b.zeros("enc.agg_var.psi.b", 1, dz),
        };

        let gen_vocab = if edge_mode {
            2 // sum node or end
        } else {
            spec.op_vocabulary.len() - 1 // interior ops + the direction's end type
        };
        let edge_out = if edge_mode { edge_vocab + 1 } else { 1 };
        let dec_embed_rows = if edge_mode { 2 } else { spec.op_vocabulary.len() };
        let decoder = |b: &mut Binder, prefix: &str| DecoderIds {
            embed: b.mat(&format!("{prefix}.embed"), dec_embed_rows, d),
            edge_embed: edge_mode.then(|| b.mat(&format!("{prefix}.edge_embed"), edge_vocab, d)),
            init_start: b.fc2(&format!("{prefix}.init_start"), dz + d, d, d),
            init_node: b.fc2(&format!("{prefix}.init_node"), 2 * dz + d, d, d),
            add_node: b.fc2(&format!("{prefix}.add_node"), 2 * dz, d, gen_vocab),
            add_edge: b.fc2(&format!("{prefix}.add_edge"), 2 * d + 2 * dz, d, edge_out),
            msg_fwd_w: b.mat(&format!("{prefix}.msg_fwd.w"), msg_in, d),
            msg_fwd_b: b.zeros(&format!("{prefix}.msg_fwd.b"), 1, d),
            msg_bwd_w: b.mat(&format!("{prefix}.msg_bwd.w"), msg_in, d),
            msg_bwd_b: b.zeros(&format!("{prefix}.msg_bwd.b"), 1, d),
            gru: b.gru(&format!("{prefix}.gru"), d, d),
            agg_phi_w: b.mat(&format!("{prefix}.agg.phi.w"), d, dz),
            agg_phi_b: b.zeros(&format!("{prefix}.agg.phi.b"), 1, dz),
            agg_psi_w: b.mat(&format!("{prefix}.agg.psi.w"), d, dz),
            agg_psi_b: b.zeros(&format!("{prefix}.agg.psi.b"), 1, dz),
        };
        let dec_fwd = decoder(&mut b, "dec.fwd");
        let dec_bwd = decoder(&mut b, "dec.bwd");

        let mut layers = Vec::new();
        let mut d_in = dz;
        for (i, &w) in PREDICTOR_WIDTHS.iter().enumerate() {
            layers.push((
                b.mat(&format!("pred.l{i}.w"), d_in, w),
                b.zeros(&format!("pred.l{i}.b"), 1, w),
            ));
            d_in = w;
        }
        layers.push((
            b.mat(&format!("pred.l{}.w", PREDICTOR_WIDTHS.len()), d_in, 1),
            b.zeros(&format!("pred.l{}.b", PREDICTOR_WIDTHS.len()), 1, 1),
        ));
        let pred = PredictorIds { layers };

        (enc, dec_fwd, dec_bwd, pred)
    }

    pub fn is_edge_mode(&self) -> bool {
        self.spec.label_mode == LabelMode::EdgeLabeled
    }

    /// Size of the per-direction node-type generation vocabulary.
    pub fn gen_vocab(&self) -> usize {
        if self.is_edge_mode() {
            2
        } else {
            self.spec.op_vocabulary.len() - 1
        }
    }
}

/// Maps a node type to its generation-vocabulary index for a direction, and
/// back. Forward decoding never emits the input type; backward decoding never
/// emits the output type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// The type the directional generation loop stops on.
    pub fn end_type(&self, spec: &SearchSpaceSpec) -> usize {
        match self {
            Direction::Forward => spec.output_type(),
            Direction::Backward => spec.input_type(),
        }
    }

    /// The type of the directional start node.
    pub fn start_type(&self, spec: &SearchSpaceSpec) -> usize {
        match self {
            Direction::Forward => spec.input_type(),
            Direction::Backward => spec.output_type(),
        }
    }

    pub fn gen_index(&self, spec: &SearchSpaceSpec, node_type: usize) -> usize {
        let _ = spec;
        match self {
            Direction::Forward => node_type - 1,
            Direction::Backward => node_type,
        }
    }

    pub fn type_of_gen_index(&self, spec: &SearchSpaceSpec, gen_index: usize) -> usize {
        let _ = spec;
        match self {
            Direction::Forward => gen_index + 1,
            Direction::Backward => gen_index,
        }
    }
}
