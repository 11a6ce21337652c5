//! Diagonal-covariance Gaussian components, per-view density evaluation,
//! weighted maximum likelihood updates, and a plain single-view GMM.
//!
//! The GMM doubles as the concatenated-data baseline ("cat") and provides
//! the per-view machinery (log densities, weighted MLE) that the multi-view
//! EM algorithms are built on.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans;

pub const LN_2PI: f64 = 1.8378770664093453;

/// One Gaussian component with diagonal covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianDiagComponent {
    pub mean: Array1<f64>,
    /// Per-coordinate variances, kept strictly positive by the
    /// regularization floor.
    pub variance: Array1<f64>,
}

/// All components of one view.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewModel {
    pub components: Vec<GaussianDiagComponent>,
    pub dim: usize,
}

impl ViewModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }
}

/// Log density of a diagonal Gaussian at `x`.
pub fn log_density(c: &GaussianDiagComponent, x: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(c.mean.len(), x.len());
    let mut acc = 0.0;
    for j in 0..x.len() {
        let var = c.variance[j];
        let d = x[j] - c.mean[j];
        acc += -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var);
    }
    acc
}

/// `n x K` matrix of per-component log densities.
pub fn log_density_matrix(view: &ViewModel, data: &Array2<f64>) -> Array2<f64> {
    let n = data.nrows();
    let k = view.k();
    let mut out = Array2::zeros((n, k));
    for (c, comp) in view.components.iter().enumerate() {
        for i in 0..n {
            out[[i, c]] = log_density(comp, data.row(i));
        }
    }
    out
}

/// Outcome of a weighted maximum likelihood update; components whose weight
/// column summed to zero are left unchanged and reported in `frozen`.
#[derive(Debug, Clone)]
pub struct WeightedMleOutcome {
    pub model: ViewModel,
    pub frozen: Vec<usize>,
}

/// Weighted MLE for diagonal Gaussians: per-component weighted means and
/// weighted variances plus the regularization floor.
pub fn weighted_mle_update(
    data: &Array2<f64>,
    weights: &Array2<f64>,
    previous: &ViewModel,
    reg_floor: &Array1<f64>,
) -> WeightedMleOutcome {
    let (n, d) = data.dim();
    let k = weights.ncols();
    debug_assert_eq!(weights.nrows(), n);
    debug_assert_eq!(previous.k(), k);
    let mut components = Vec::with_capacity(k);
    let mut frozen = Vec::new();
    for c in 0..k {
        let wsum: f64 = weights.column(c).sum();
        if wsum <= 0.0 {
            frozen.push(c);
            components.push(previous.components[c].clone());
            continue;
        }
        let mut mean = Array1::zeros(d);
        for i in 0..n {
            let w = weights[[i, c]];
            if w != 0.0 {
                mean.scaled_add(w, &data.row(i));
            }
        }
        mean /= wsum;
        let mut var = Array1::zeros(d);
        for i in 0..n {
            let w = weights[[i, c]];
            if w != 0.0 {
                for j in 0..d {
                    let diff = data[[i, j]] - mean[j];
                    var[j] += w * diff * diff;
                }
            }
        }
        var /= wsum;
        var += reg_floor;
        components.push(GaussianDiagComponent {
            mean,
            variance: var,
        });
    }
    WeightedMleOutcome {
        model: ViewModel {
            components,
            dim: d,
        },
        frozen,
    }
}

/// Per-feature regularization floor: `reg_scale` times the data variance,
/// clamped away from zero so constant features stay well defined.
pub fn regularization_floor(data: &Array2<f64>, reg_scale: f64) -> Array1<f64> {
    let n = data.nrows().max(1) as f64;
    let mean = data.mean_axis(Axis(0)).expect("nonempty data");
    let mut var = Array1::zeros(data.ncols());
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            let d = data[[i, j]] - mean[j];
            var[j] += d * d;
        }
    }
    var /= n;
    var.mapv(|v| (reg_scale * v).max(1e-12))
}

/// Convergence trace shared by the EM fitters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTrace {
    /// Objective after each iteration (log-likelihood, or the penalized
    /// objective for the penalized fitters).
    pub objective: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Which random restart produced the kept model.
    pub best_restart: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub n_init: usize,
    pub reg_scale: f64,
    pub seed: u64,
}

impl GmmConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        GmmConfig {
            k,
            max_iter: 300,
            rel_tol: 1e-8,
            n_init: 10,
            reg_scale: 1e-6,
            seed,
        }
    }
}

/// Numerically stable `log(sum(exp(v)))` over a slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Fit a single-view diagonal GMM by EM with k-means++ seeding and
/// `n_init` restarts (best final log-likelihood kept).
pub fn fit_gmm(
    data: &Array2<f64>,
    config: &GmmConfig,
) -> Result<(ViewModel, Array1<f64>, FitTrace)> {
    let (n, d) = data.dim();
    if config.k == 0 || config.k > n {
        return Err(Error::InvalidInput(format!(
            "cannot fit {} components to {n} observations",
            config.k
        )));
    }
    let reg_floor = regularization_floor(data, config.reg_scale);
    let data_var = reg_floor.mapv(|v| (v / config.reg_scale).max(1e-6));

    let mut best: Option<(ViewModel, Array1<f64>, FitTrace)> = None;
    for restart in 0..config.n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let seeds = kmeans::kmeans_plus_plus(data, config.k, &mut rng)?;
        let mut view = ViewModel {
            components: seeds
                .iter()
                .map(|&i| GaussianDiagComponent {
                    mean: data.row(i).to_owned(),
                    variance: data_var.clone(),
                })
                .collect(),
            dim: d,
        };
        let mut mixing = Array1::from_elem(config.k, 1.0 / config.k as f64);
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        loop {
            let logd = log_density_matrix(&view, data);
            // E-step in log space.
            let mut resp = Array2::zeros((n, config.k));
            let mut ll = 0.0;
            let mut buf = vec![0.0; config.k];
            for i in 0..n {
                for c in 0..config.k {
                    buf[c] = mixing[c].ln() + logd[[i, c]];
                }
                let norm = log_sum_exp(&buf);
                ll += norm;
                for c in 0..config.k {
                    resp[[i, c]] = (buf[c] - norm).exp();
                }
            }
            if let Some(&prev) = trace.last() {
                trace.push(ll);
                if f64::abs(ll - prev) <= config.rel_tol * (prev.abs() + 1.0) {
                    converged = true;
                    break;
                }
            } else {
                trace.push(ll);
            }
            if iterations >= config.max_iter {
                break;
            }
            iterations += 1;
            // M-step.
            let out = weighted_mle_update(data, &resp, &view, &reg_floor);
            view = out.model;
            for c in 0..config.k {
                mixing[c] = resp.column(c).sum() / n as f64;
            }
        }
        let final_ll = *trace.last().unwrap_or(&f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((_, _, t)) => final_ll > *t.objective.last().unwrap(),
        };
        if better {
            best = Some((
                view,
                mixing,
                FitTrace {
                    objective: trace,
                    converged,
                    iterations,
                    best_restart: restart,
                },
            ));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Posterior argmax labels under a fitted GMM.
pub fn predict_gmm(view: &ViewModel, mixing: &Array1<f64>, data: &Array2<f64>) -> Vec<usize> {
    let logd = log_density_matrix(view, data);
    (0..data.nrows())
        .map(|i| {
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for c in 0..view.k() {
                let v = mixing[c].ln() + logd[[i, c]];
                if v > best {
                    best = v;
                    arg = c;
                }
            }
            arg
        })
        .collect()
}
