//! Central finite-difference comparison against reverse-mode gradients.

use super::registry::ParamRegistry;
use super::tape::{Id, Tape};

/// Per-parameter maximum relative error between reverse-mode gradients and
/// central finite differences.
#[derive(Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Runs `f` (a deterministic scalar loss over the registry) once for the
/// analytic gradients and twice per parameter entry for the numeric ones.
///
/// Relative error is |a - n| / max(1e-8, |a| + |n|), the symmetric form that
/// stays meaningful near zero.
pub fn grad_check(
    f: impl Fn(&mut Tape, &ParamRegistry) -> Id,
    registry: &mut ParamRegistry,
    step: f64,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let loss = f(&mut tape, registry);
    let grads = tape.backward(loss).expect("grad_check loss must be scalar");
    let mut analytic: Vec<ndarray::Array2<f64>> = registry
        .export()
        .iter()
        .map(|(_, v, _, _)| ndarray::Array2::zeros(v.dim()))
        .collect();
    for (pid, g) in grads.params() {
        analytic[pid] += g;
    }

    let mut per_param = Vec::new();
    let mut max_rel = 0.0f64;
    for pid in 0..registry.len() {
        let (rows, cols) = registry.value(pid).dim();
        let mut worst = 0.0f64;
        for r in 0..rows {
            for c in 0..cols {
                let orig = registry.value(pid)[(r, c)];
                registry.value_mut(pid)[(r, c)] = orig + step;
                let mut tp = Tape::new();
                let lp = f(&mut tp, registry);
                let plus = tp.scalar(lp);
                registry.value_mut(pid)[(r, c)] = orig - step;
                let mut tm = Tape::new();
                let lm = f(&mut tm, registry);
                let minus = tm.scalar(lm);
                registry.value_mut(pid)[(r, c)] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic[pid][(r, c)];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        per_param.push((registry.name(pid).to_string(), worst));
        max_rel = max_rel.max(worst);
    }
    GradCheckReport {
        per_param,
        max_rel_error: max_rel,
    }
}
