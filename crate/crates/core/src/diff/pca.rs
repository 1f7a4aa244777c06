//! Principal-component projection via power iteration with deflation.

use ndarray::{Array1, Array2};

use super::DiffError;

const VARIANCE_FLOOR: f64 = 1e-12;
const POWER_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// One k-vector per input point.
    pub coords: Vec<Vec<f64>>,
    /// Principal directions, one row per component.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each component (covariance eigenvalues).
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Mean-centered projection of `points` onto the top-k principal directions.
/// Component signs are fixed so each component's largest-magnitude loading is
/// positive. Errors with `DegenerateSpread` if any requested component has
/// variance below 1e-12.
pub fn pca_project(points: &[Vec<f64>], k: usize) -> Result<PcaResult, DiffError> {
    let n = points.len();
    assert!(n >= k + 1, "need at least k+1 points");
    let d = points[0].len();
    assert!(k <= d, "k exceeds dimension");
    assert!(points.iter().all(|p| p.len() == d), "ragged point set");

    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = Array2::from_shape_fn((n, d), |(i, j)| points[i][j] - mean[j]);
    // Covariance (d x d); d is small (latent dim).
    let mut cov = centered.t().dot(&centered) / n as f64;

    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for comp in 0..k {
        let (lambda, v) = dominant_eigenpair(&cov, comp);
        if lambda < VARIANCE_FLOOR {
            return Err(DiffError::DegenerateSpread);
        }
        // Deflate.
        let outer = {
            let vc = v.view().insert_axis(ndarray::Axis(1));
            vc.dot(&vc.t())
        };
        cov = cov - lambda * &outer;
        components.push(fix_sign(v));
        eigenvalues.push(lambda);
    }

    let coords = points
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(p.iter().zip(&mean))
                        .map(|(ci, (xi, mi))| ci * (xi - mi))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(PcaResult {
        coords,
        components,
        explained_variance: eigenvalues,
        mean,
    })
}

fn dominant_eigenpair(cov: &Array2<f64>, seed: usize) -> (f64, Array1<f64>) {
    let d = cov.nrows();
    // Deterministic start vector; perturbed per component so deflated runs do
    // not start orthogonal to the next eigenvector.
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + ((i + seed + 1) as f64 * 0.739).sin());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let w = cov.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm < VARIANCE_FLOOR {
            return (0.0, v);
        }
        let next = &w / norm;
        let next_lambda = next.dot(&cov.dot(&next));
        let delta = (&next - &v).mapv(f64::abs).sum().min((&next + &v).mapv(f64::abs).sum());
        v = next;
        lambda = next_lambda;
        if delta < POWER_TOL {
            break;
        }
    }
    (lambda, v)
}

fn fix_sign(v: Array1<f64>) -> Vec<f64> {
    let mut max_idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[max_idx].abs() {
            max_idx = i;
        }
    }
    let flip = if v[max_idx] < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * flip).collect()
}
