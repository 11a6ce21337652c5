//! Log-penalized sparse MVMM.
//!
//! The penalized likelihood subtracts `lambda * sum log(delta + pi)` from
//! the log-likelihood. For small `delta` the exact M-step for `pi` is
//! approximated (with vanishing error as `delta -> 0`) by normalized
//! soft-thresholding of the E-step averages, which produces exact zeros.
//! `delta` itself only enters the monitored objective, never the updates.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixtures::FitTrace;
use crate::model::{EmConfig, MultiViewData, MvmmModel, ProbTable, fit_em, log_likelihood, run_em};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogPenConfig {
    /// Sparsity level; must lie in `(0, 1 / prod(K))`.
    pub lambda: f64,
    /// Objective-monitoring offset only; plays no role in the updates.
    pub delta: f64,
    pub em: EmConfig,
    /// Plain EM iterations used to initialize.
    pub init_iters: usize,
}

impl LogPenConfig {
    pub fn new(lambda: f64, em: EmConfig) -> Self {
        LogPenConfig {
            lambda,
            delta: 1e-6,
            em,
            init_iters: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        let cells: usize = self.em.k.iter().product();
        let bound = 1.0 / cells as f64;
        if self.lambda <= 0.0 || self.lambda >= bound {
            return Err(Error::Contract(format!(
                "lambda = {} outside (0, {bound})",
                self.lambda
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::Contract("delta must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized soft-thresholding: `(a - lambda)_+` renormalized. The bound
/// `lambda < 1 / num_cells` guarantees a positive denominator.
pub fn soft_threshold_simplex(a: &ProbTable, lambda: f64) -> Result<ProbTable> {
    let cells = a.num_cells() as f64;
    if lambda < 0.0 || lambda >= 1.0 / cells {
        return Err(Error::Contract(format!(
            "lambda = {lambda} outside [0, {})",
            1.0 / cells
        )));
    }
    let thresholded: ArrayD<f64> = a.values().mapv(|v| (v - lambda).max(0.0));
    let total = thresholded.sum();
    assert!(
        total > 0.0,
        "soft threshold denominator vanished despite the lambda bound"
    );
    ProbTable::new(thresholded.mapv(|v| v / total))
}

/// `loglik - lambda * sum_cells log(delta + pi)`.
pub fn penalized_objective(m: &MvmmModel, data: &MultiViewData, lambda: f64, delta: f64) -> f64 {
    let penalty: f64 = m.pi.values().iter().map(|&p| (delta + p).ln()).sum();
    log_likelihood(m, data) - lambda * penalty
}

/// Fit the log-penalized MVMM: plain EM for `init_iters` iterations, then
/// EM whose `pi` step is normalized soft-thresholding at `lambda`.
///
/// Because the M-step is approximate the monitored objective may tick up by
/// a vanishing amount; occurrences are logged, not fatal.
pub fn fit_log_pen(data: &MultiViewData, config: &LogPenConfig) -> Result<(MvmmModel, FitTrace)> {
    config.validate()?;
    let mut init_cfg = config.em.clone();
    init_cfg.max_iter = config.init_iters;
    let (model, init_trace) = fit_em(data, &init_cfg)?;
    let best_restart = init_trace.best_restart;

    let lambda = config.lambda;
    let delta = config.delta;
    let (model, trace, converged, iterations) = run_em(
        data,
        model,
        config.em.max_iter,
        config.em.rel_tol,
        config.em.reg_scale,
        |a| soft_threshold_simplex(a, lambda),
        |m, ll| {
            let penalty: f64 = m.pi.values().iter().map(|&p| (delta + p).ln()).sum();
            ll - lambda * penalty
        },
    )?;
    Ok((
        model,
        FitTrace {
            objective: trace,
            converged,
            iterations,
            best_restart,
        },
    ))
}

/// Geometric grid of `points` lambda values spanning
/// `[1e-4, 0.99 / num_cells]`.
pub fn lambda_grid(num_cells: usize, points: usize) -> Vec<f64> {
    let hi = 0.99 / num_cells as f64;
    let lo = 1e-4f64.min(hi / 10.0);
    if points == 1 {
        return vec![hi];
    }
    (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect()
}
