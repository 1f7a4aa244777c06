//! Gaussian-process surrogate with a deterministic inducing-point
//! approximation and expected improvement. With the inducing set equal to the
//! training inputs the predictions coincide with an exact GP.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_stream;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("kernel matrix not positive definite after jitter escalation")]
    IllConditioned,
    #[error("need at least 2 training points, got {0}")]
    TooFewPoints(usize),
}

/// Squared-exponential kernel hyperparameters, stored in log space so
/// optimization is unconstrained.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GpHypers {
    pub log_signal_var: f64,
    pub log_length_scale: f64,
    pub log_noise_var: f64,
}

impl Default for GpHypers {
    fn default() -> Self {
        GpHypers {
            log_signal_var: 0.0,
            log_length_scale: 0.0,
            log_noise_var: (1e-2f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpConfig {
    pub m_inducing: usize,
    /// Ascent steps on the approximate log marginal likelihood.
    pub opt_iters: usize,
    pub seed: u64,
    pub init: GpHypers,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            m_inducing: 500,
            opt_iters: 40,
            seed: 0,
            init: GpHypers::default(),
        }
    }
}

/// Fitted surrogate. Training targets are centered internally; predictions
/// add the offset back.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    inducing: Array2<f64>,
    hypers: GpHypers,
    y_offset: f64,
    /// Cholesky factor of K_mm (with jitter).
    l_mm: Array2<f64>,
    /// Cholesky factor of A = K_mm + noise^-1 K_mn K_nm.
    l_a: Array2<f64>,
    /// noise^-1 A^-1 K_mn (y - offset).
    alpha: Array1<f64>,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const NOISE_FLOOR: f64 = 1e-8;

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

fn cholesky_jittered(a: &Array2<f64>) -> Result<Array2<f64>, GpError> {
    let mut jitter = JITTER_START;
    loop {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(l) = cholesky(&m) {
            return Ok(l);
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX {
            return Err(GpError::IllConditioned);
        }
    }
}

/// Solves L x = b for lower-triangular L.
fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * x[k];
            x[i] -= t;
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Solves L^T x = b for lower-triangular L.
fn solve_lower_t(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)] * x[k];
            x[i] -= t;
        }
        x[i] /= l[(i, i)];
    }
    x
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(hypers: &GpHypers, a: &[f64], b: &[f64]) -> f64 {
    let sf2 = hypers.log_signal_var.exp();
    let l2 = (2.0 * hypers.log_length_scale).exp();
    sf2 * (-sq_dist(a, b) / (2.0 * l2)).exp()
}

fn kernel_matrix(hypers: &GpHypers, a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            k[(i, j)] = kernel(
                hypers,
                a.row(i).as_slice().expect("contiguous"),
                b.row(j).as_slice().expect("contiguous"),
            );
        }
    }
    k
}

/// Seeded k-means++-style subsample: first index uniform, then each next
/// point drawn with probability proportional to its squared distance from
/// the chosen set.
pub fn select_inducing(points: &Array2<f64>, m: usize, seed: u64) -> Vec<usize> {
    let n = points.nrows();
    let m = m.min(n);
    let mut rng = rng_stream(seed, 0x9000_0001);
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| {
            sq_dist(
                points.row(i).as_slice().expect("contiguous"),
                points.row(chosen[0]).as_slice().expect("contiguous"),
            )
        })
        .collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // Degenerate cloud: walk indices deterministically.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        chosen.push(next);
        for i in 0..n {
            let d = sq_dist(
                points.row(i).as_slice().expect("contiguous"),
                points.row(next).as_slice().expect("contiguous"),
            );
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen.sort_unstable();
    chosen.dedup();
    chosen
}

struct FitFactors {
    l_mm: Array2<f64>,
    l_a: Array2<f64>,
    alpha: Array1<f64>,
    nlml: f64,
}

/// Factorizes the deterministic-inducing approximation and evaluates its
/// negative log marginal likelihood log N(y | 0, K_nm K_mm^-1 K_mn + noise I).
fn factorize(
    x: &Array2<f64>,
    y: &Array1<f64>,
    z: &Array2<f64>,
    hypers: &GpHypers,
) -> Result<FitFactors, GpError> {
    let n = x.nrows();
    let m = z.nrows();
    let noise = hypers.log_noise_var.exp().max(NOISE_FLOOR);

    let k_mm = kernel_matrix(hypers, z, z);
    let k_mn = kernel_matrix(hypers, z, x);
    let l_mm = cholesky_jittered(&k_mm)?;

    // A = K_mm + noise^-1 K_mn K_nm
    let a = &k_mm + &(k_mn.dot(&k_mn.t()) / noise);
    let l_a = cholesky_jittered(&a)?;

    // alpha = noise^-1 A^-1 K_mn y
    let kmn_y = k_mn.dot(y);
    let tmp = solve_lower(&l_a, &kmn_y);
    let alpha = solve_lower_t(&l_a, &tmp) / noise;

    // Determinant lemma: |Q + noise I| = |A| / |K_mm| * noise^n.
    let log_det_a: f64 = (0..m).map(|i| 2.0 * l_a[(i, i)].ln()).sum();
    let log_det_kmm: f64 = (0..m).map(|i| 2.0 * l_mm[(i, i)].ln()).sum();
    let log_det = log_det_a - log_det_kmm + n as f64 * noise.ln();

    // Woodbury: y^T (Q + noise I)^-1 y = (y.y - y^T K_nm alpha) / noise.
    let quad = (y.dot(y) - kmn_y.dot(&alpha)) / noise;

    let nlml = 0.5 * (quad + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln());
    Ok(FitFactors {
        l_mm,
        l_a,
        alpha,
        nlml,
    })
}

/// Fits the surrogate: inducing points by seeded subsampling (the full
/// training set when `m_inducing >= n`), hyperparameters by coordinate
/// ascent on the approximate marginal likelihood with central-difference
/// gradients in log space.
pub fn fit_gp(
    points: &Array2<f64>,
    targets: &[f64],
    cfg: &GpConfig,
) -> Result<GpSurrogate, GpError> {
    let n = points.nrows();
    if n < 2 {
        return Err(GpError::TooFewPoints(n));
    }
    let y_offset = targets.iter().sum::<f64>() / n as f64;
    let y = Array1::from_iter(targets.iter().map(|&t| t - y_offset));

    let inducing = if cfg.m_inducing >= n {
        points.clone()
    } else {
        let idx = select_inducing(points, cfg.m_inducing, cfg.seed);
        let mut z = Array2::zeros((idx.len(), points.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            z.row_mut(r).assign(&points.row(i));
        }
        z
    };

    let mut hypers = cfg.init;
    let mut best = factorize(points, &y, &inducing, &hypers)?.nlml;
    let mut step = 0.1;
    const H: f64 = 1e-4;
    for _ in 0..cfg.opt_iters {
        let mut grad = [0.0f64; 3];
        for k in 0..3 {
            let mut hi = hypers;
            let mut lo = hypers;
            *field(&mut hi, k) += H;
            *field(&mut lo, k) -= H;
            let f_hi = factorize(points, &y, &inducing, &hi).map(|f| f.nlml);
            let f_lo = factorize(points, &y, &inducing, &lo).map(|f| f.nlml);
            grad[k] = match (f_hi, f_lo) {
                (Ok(a), Ok(b)) => (a - b) / (2.0 * H),
                _ => 0.0,
            };
        }
        let mut trial = hypers;
        for k in 0..3 {
            *field(&mut trial, k) -= step * grad[k];
        }
        match factorize(points, &y, &inducing, &trial) {
            Ok(f) if f.nlml < best => {
                hypers = trial;
                best = f.nlml;
                step = (step * 1.2).min(1.0);
            }
            _ => step *= 0.5,
        }
        if step < 1e-6 {
            break;
        }
    }

    let factors = factorize(points, &y, &inducing, &hypers)?;
    Ok(GpSurrogate {
        inducing,
        hypers,
        y_offset,
        l_mm: factors.l_mm,
        l_a: factors.l_a,
        alpha: factors.alpha,
    })
}

impl GpSurrogate {
    pub fn hypers(&self) -> &GpHypers {
        &self.hypers
    }

    pub fn inducing_count(&self) -> usize {
        self.inducing.nrows()
    }

    /// Predictive mean and (non-negative) latent variance at one point.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let m = self.inducing.nrows();
        let mut k_star = Array1::zeros(m);
        for i in 0..m {
            k_star[i] = kernel(
                &self.hypers,
                self.inducing.row(i).as_slice().expect("contiguous"),
                x,
            );
        }
        let mean = k_star.dot(&self.alpha) + self.y_offset;

        let k_ss = kernel(&self.hypers, x, x);
        let v_mm = solve_lower(&self.l_mm, &k_star);
        let v_a = solve_lower(&self.l_a, &k_star);
        let var = k_ss - v_mm.dot(&v_mm) + v_a.dot(&v_a);
        (mean, var.max(0.0))
    }

    pub fn predict_batch(&self, xs: &Array2<f64>) -> Vec<(f64, f64)> {
        (0..xs.nrows())
            .map(|i| self.predict(xs.row(i).as_slice().expect("contiguous")))
            .collect()
    }
}

fn field(h: &mut GpHypers, k: usize) -> &mut f64 {
    match k {
        0 => &mut h.log_signal_var,
        1 => &mut h.log_length_scale,
        _ => &mut h.log_noise_var,
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement for maximization:
/// (mu - y_best) Phi(u) + sigma phi(u) with u = (mu - y_best) / sigma;
/// max(mu - y_best, 0) at sigma = 0. Always non-negative.
pub fn expected_improvement(mean: f64, std_dev: f64, y_best: f64) -> f64 {
    let delta = mean - y_best;
    if std_dev <= 0.0 {
        return delta.max(0.0);
    }
    let u = delta / std_dev;
    (delta * normal_cdf(u) + std_dev * normal_pdf(u)).max(0.0)
}
