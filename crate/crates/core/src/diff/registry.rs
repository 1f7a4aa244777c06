//! Named parameter storage with gradient slots and Adam state.

use ndarray::Array2;
use rand::Rng;
use std::collections::BTreeMap;

use super::tape::Gradients;
use super::DiffError;

pub type ParamId = usize;

#[derive(Debug, Clone)]
pub(crate) struct ParamSlot {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    pub moment1: Array2<f64>,
    pub moment2: Array2<f64>,
}

/// All learnable weight tables, keyed by unique names, plus optimizer state.
#[derive(Debug, Clone, Default)]
pub struct ParamRegistry {
    names: BTreeMap<String, ParamId>,
    slots: Vec<ParamSlot>,
    step: u64,
    grads_ready: bool,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) -> ParamId {
        assert!(
            !self.names.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let shape = value.dim();
        let pid = self.slots.len();
        self.slots.push(ParamSlot {
            name: name.to_string(),
            value,
            grad: Array2::zeros(shape),
            moment1: Array2::zeros(shape),
            moment2: Array2::zeros(shape),
        });
        self.names.insert(name.to_string(), pid);
        pid
    }

    /// Inserts a parameter with entries drawn uniformly from [-scale, scale].
    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let value = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale));
        self.insert(name, value)
    }

    pub fn id(&self, name: &str) -> ParamId {
        *self
            .names
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter: {name}"))
    }

    pub fn try_id(&self, name: &str) -> Option<ParamId> {
        self.names.get(name).copied()
    }

    pub fn value(&self, pid: ParamId) -> &Array2<f64> {
        &self.slots[pid].value
    }

    pub fn value_mut(&mut self, pid: ParamId) -> &mut Array2<f64> {
        &mut self.slots[pid].value
    }

    pub fn grad(&self, pid: ParamId) -> &Array2<f64> {
        &self.slots[pid].grad
    }

    pub fn name(&self, pid: ParamId) -> &str {
        &self.slots[pid].name
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.keys().map(String::as_str)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.fill(0.0);
        }
        self.grads_ready = false;
    }

    /// Adds one backward pass's gradients (scaled by `weight`) into the
    /// registry slots. Gradients accumulate additively across calls.
    pub fn accumulate(&mut self, grads: &Gradients, weight: f64) {
        for (pid, g) in grads.params() {
            self.slots[pid].grad.scaled_add(weight, g);
        }
        self.grads_ready = true;
    }

    /// Standard bias-corrected Adam update; zeroes gradients afterwards.
    pub fn adam_step(
        &mut self,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<(), DiffError> {
        if !self.grads_ready {
            return Err(DiffError::MissingGrad);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for slot in &mut self.slots {
            slot.moment1.zip_mut_with(&slot.grad, |m, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
            });
            slot.moment2.zip_mut_with(&slot.grad, |v, &g| {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            });
            let m_hat = &slot.moment1 / bc1;
            let v_hat = &slot.moment2 / bc2;
            slot.value
                .zip_mut_with(&(&m_hat / &(v_hat.mapv(f64::sqrt) + eps)), |p, &u| {
                    *p -= lr * u;
                });
            slot.grad.fill(0.0);
        }
        self.grads_ready = false;
        Ok(())
    }

    /// Raw access for checkpointing: (name, value, moment1, moment2).
    pub fn export(&self) -> Vec<(String, Array2<f64>, Array2<f64>, Array2<f64>)> {
        self.slots
            .iter()
            .map(|s| (s.name.clone(), s.value.clone(), s.moment1.clone(), s.moment2.clone()))
            .collect()
    }

    pub fn restore(
        entries: Vec<(String, Array2<f64>, Array2<f64>, Array2<f64>)>,
        step: u64,
    ) -> Self {
        let mut reg = ParamRegistry::new();
        for (name, value, m1, m2) in entries {
            let pid = reg.insert(&name, value);
            reg.slots[pid].moment1 = m1;
            reg.slots[pid].moment2 = m2;
        }
        reg.step = step;
        reg
    }
}
