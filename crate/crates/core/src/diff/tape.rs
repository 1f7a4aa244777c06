//! The recording tape and its primitive operations.
//!
//! Values are dense row-major `f64` matrices; vectors are 1xN. Shape
//! mismatches and non-finite results panic immediately (they are programming
//! errors in a fixed-architecture model, trapped at the op that produced
//! them). Structural misuse of `backward` returns [`DiffError`].

use ndarray::{concatenate, s, Array2, Axis};

use super::registry::{ParamId, ParamRegistry};
use super::DiffError;

pub type Id = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Id, Id),
    Add(Id, Id),
    Sub(Id, Id),
    Scale(Id, f64),
    Hadamard(Id, Id),
    ConcatRows(Id, Id),
    ConcatCols(Id, Id),
    RowSum(Id),
    SumAll(Id),
    Sigmoid(Id),
    Relu(Id),
    Tanh(Id),
    Exp(Id),
    Log(Id),
    SoftmaxCe { logits: Id, class: usize },
    BceLogit { logit: Id, target: f64 },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// A single-use recording of a forward computation.
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by one backward traversal, indexed by parameter or by
/// raw leaf id.
pub struct Gradients {
    by_node: Vec<Option<Array2<f64>>>,
    params: Vec<(ParamId, Id)>,
}

impl Gradients {
    pub fn leaf(&self, id: Id) -> Option<&Array2<f64>> {
        self.by_node.get(id).and_then(|g| g.as_ref())
    }

    /// Iterates over (parameter, gradient) pairs for registry-bound leaves.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Array2<f64>)> {
        self.params
            .iter()
            .filter_map(|(pid, id)| self.by_node[*id].as_ref().map(|g| (*pid, g)))
    }
}

fn assert_finite(value: &Array2<f64>, what: &str) {
    assert!(
        value.iter().all(|x| x.is_finite()),
        "non-finite value produced by {what}"
    );
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::with_capacity(256),
            consumed: false,
        }
    }

    pub fn value(&self, id: Id) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: Id) -> f64 {
        let v = self.value(id);
        assert_eq!(v.dim(), (1, 1), "scalar() on non-scalar node");
        v[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool, param: Option<ParamId>) -> Id {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param,
        });
        self.nodes.len() - 1
    }

    fn push_op(&mut self, value: Array2<f64>, op: Op, inputs: &[Id], what: &str) -> Id {
        assert_finite(&value, what);
        let rg = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push(value, op, rg, None)
    }

    /// A value with no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Id {
        assert_finite(&value, "constant");
        self.push(value, Op::Leaf, false, None)
    }

    /// An unbound differentiable leaf (used by tests and gradient checks).
    pub fn leaf(&mut self, value: Array2<f64>) -> Id {
        assert_finite(&value, "leaf");
        self.push(value, Op::Leaf, true, None)
    }

    /// A leaf bound to a registry parameter; backward gradients for it are
    /// retrievable through [`Gradients::params`].
    pub fn param(&mut self, registry: &ParamRegistry, pid: ParamId) -> Id {
        self.push(registry.value(pid).clone(), Op::Leaf, true, Some(pid))
    }

    pub fn matmul(&mut self, a: Id, b: Id) -> Id {
        let (ra, ca) = self.nodes[a].value.dim();
        let (rb, cb) = self.nodes[b].value.dim();
        assert_eq!(ca, rb, "matmul shape mismatch: {ra}x{ca} . {rb}x{cb}");
        let value = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push_op(value, Op::Matmul(a, b), &[a, b], "matmul")
    }

    fn binary_same_shape(&mut self, a: Id, b: Id, what: &str) {
        assert_eq!(
            self.nodes[a].value.dim(),
            self.nodes[b].value.dim(),
            "{what} shape mismatch"
        );
    }

    pub fn add(&mut self, a: Id, b: Id) -> Id {
        self.binary_same_shape(a, b, "add");
        let value = &self.nodes[a].value + &self.nodes[b].value;
        self.push_op(value, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Id, b: Id) -> Id {
        self.binary_same_shape(a, b, "sub");
        let value = &self.nodes[a].value - &self.nodes[b].value;
        self.push_op(value, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn scale(&mut self, a: Id, c: f64) -> Id {
        let value = &self.nodes[a].value * c;
        self.push_op(value, Op::Scale(a, c), &[a], "scale")
    }

    pub fn hadamard(&mut self, a: Id, b: Id) -> Id {
        self.binary_same_shape(a, b, "hadamard");
        let value = &self.nodes[a].value * &self.nodes[b].value;
        self.push_op(value, Op::Hadamard(a, b), &[a, b], "hadamard")
    }

    pub fn concat_rows(&mut self, a: Id, b: Id) -> Id {
        assert_eq!(
            self.nodes[a].value.ncols(),
            self.nodes[b].value.ncols(),
            "concat_rows column mismatch"
        );
        let value = concatenate![Axis(0), self.nodes[a].value, self.nodes[b].value];
        self.push_op(value, Op::ConcatRows(a, b), &[a, b], "concat_rows")
    }

    pub fn concat_cols(&mut self, a: Id, b: Id) -> Id {
        assert_eq!(
            self.nodes[a].value.nrows(),
            self.nodes[b].value.nrows(),
            "concat_cols row mismatch"
        );
        let value = concatenate![Axis(1), self.nodes[a].value, self.nodes[b].value];
        self.push_op(value, Op::ConcatCols(a, b), &[a, b], "concat_cols")
    }

    /// Sums each row: (r x c) -> (r x 1).
    pub fn row_sum(&mut self, a: Id) -> Id {
        let value = self.nodes[a]
            .value
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        self.push_op(value, Op::RowSum(a), &[a], "row_sum")
    }

    /// Sums all entries into a 1x1 scalar.
    pub fn sum_all(&mut self, a: Id) -> Id {
        let value = Array2::from_elem((1, 1), self.nodes[a].value.sum());
        self.push_op(value, Op::SumAll(a), &[a], "sum_all")
    }

    pub fn sigmoid(&mut self, a: Id) -> Id {
        let value = self.nodes[a].value.mapv(sigmoid_scalar);
        self.push_op(value, Op::Sigmoid(a), &[a], "sigmoid")
    }

    pub fn relu(&mut self, a: Id) -> Id {
        let value = self.nodes[a].value.mapv(|x| x.max(0.0));
        self.push_op(value, Op::Relu(a), &[a], "relu")
    }

    pub fn tanh(&mut self, a: Id) -> Id {
        let value = self.nodes[a].value.mapv(f64::tanh);
        self.push_op(value, Op::Tanh(a), &[a], "tanh")
    }

    pub fn exp(&mut self, a: Id) -> Id {
        let value = self.nodes[a].value.mapv(f64::exp);
        self.push_op(value, Op::Exp(a), &[a], "exp")
    }

    pub fn log(&mut self, a: Id) -> Id {
        let value = self.nodes[a].value.mapv(f64::ln);
        self.push_op(value, Op::Log(a), &[a], "log")
    }

    /// Categorical cross-entropy of a 1xN logit row against a class index:
    /// `logsumexp(logits) - logits[class]`.
    pub fn softmax_cross_entropy(&mut self, logits: Id, class: usize) -> Id {
        let v = &self.nodes[logits].value;
        assert_eq!(v.nrows(), 1, "softmax_cross_entropy wants a 1xN row");
        assert!(class < v.ncols(), "class index out of range");
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let value = Array2::from_elem((1, 1), lse - v[(0, class)]);
        self.push_op(value, Op::SoftmaxCe { logits, class }, &[logits], "softmax_cross_entropy")
    }

    /// Bernoulli cross-entropy of a 1x1 *logit* against a 0/1 target, in the
    /// numerically stable form `max(x,0) - x t + ln(1 + e^{-|x|})`.
    pub fn bernoulli_bce(&mut self, logit: Id, target: f64) -> Id {
        let v = &self.nodes[logit].value;
        assert_eq!(v.dim(), (1, 1), "bernoulli_bce wants a 1x1 logit");
        let x = v[(0, 0)];
        let loss = x.max(0.0) - x * target + (1.0 + (-x.abs()).exp()).ln();
        let value = Array2::from_elem((1, 1), loss);
        self.push_op(value, Op::BceLogit { logit, target }, &[logit], "bernoulli_bce")
    }

    /// Reverse traversal from a scalar loss. Consumes the tape's recording;
    /// calling twice is an error.
    pub fn backward(&mut self, loss: Id) -> Result<Gradients, DiffError> {
        if self.consumed {
            return Err(DiffError::GraphConsumed);
        }
        self.consumed = true;
        let (r, c) = self.nodes[loss].value.dim();
        if (r, c) != (1, 1) {
            return Err(DiffError::NotScalar(r, c));
        }
        if !self.nodes[loss].requires_grad {
            return Err(DiffError::DetachedLoss);
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Array2::from_elem((1, 1), 1.0));
        for id in (0..=loss).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.param.map(|pid| (pid, id)))
            .collect();
        Ok(Gradients {
            by_node: grads,
            params,
        })
    }

    fn propagate(&self, id: Id, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let acc = |grads: &mut [Option<Array2<f64>>], tgt: Id, delta: Array2<f64>| {
            match &mut grads[tgt] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let ga = g.dot(&self.nodes[*b].value.t());
                let gb = self.nodes[*a].value.t().dot(g);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, -g.clone());
            }
            Op::Scale(a, c) => acc(grads, *a, g * *c),
            Op::Hadamard(a, b) => {
                acc(grads, *a, g * &self.nodes[*b].value);
                acc(grads, *b, g * &self.nodes[*a].value);
            }
            Op::ConcatRows(a, b) => {
                let ra = self.nodes[*a].value.nrows();
                acc(grads, *a, g.slice(s![..ra, ..]).to_owned());
                acc(grads, *b, g.slice(s![ra.., ..]).to_owned());
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[*a].value.ncols();
                acc(grads, *a, g.slice(s![.., ..ca]).to_owned());
                acc(grads, *b, g.slice(s![.., ca..]).to_owned());
            }
            Op::RowSum(a) => {
                let (r, c) = self.nodes[*a].value.dim();
                let mut ga = Array2::zeros((r, c));
                for i in 0..r {
                    ga.row_mut(i).fill(g[(i, 0)]);
                }
                acc(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let shape = self.nodes[*a].value.dim();
                acc(grads, *a, Array2::from_elem(shape, g[(0, 0)]));
            }
            Op::Sigmoid(a) => {
                let v = &self.nodes[id].value;
                let dv = v.mapv(|s| s * (1.0 - s));
                acc(grads, *a, g * &dv);
            }
            Op::Relu(a) => {
                let mask = self.nodes[*a].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                acc(grads, *a, g * &mask);
            }
            Op::Tanh(a) => {
                let dv = self.nodes[id].value.mapv(|t| 1.0 - t * t);
                acc(grads, *a, g * &dv);
            }
            Op::Exp(a) => acc(grads, *a, g * &self.nodes[id].value),
            Op::Log(a) => acc(grads, *a, g / &self.nodes[*a].value),
            Op::SoftmaxCe { logits, class } => {
                let v = &self.nodes[*logits].value;
                let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut soft = v.mapv(|x| (x - max).exp());
                let z = soft.sum();
                soft /= z;
                soft[(0, *class)] -= 1.0;
                acc(grads, *logits, &soft * g[(0, 0)]);
            }
            Op::BceLogit { logit, target } => {
                let x = self.nodes[*logit].value[(0, 0)];
                let d = sigmoid_scalar(x) - target;
                acc(grads, *logit, Array2::from_elem((1, 1), d * g[(0, 0)]));
            }
        }
    }
}
