//! Model selection and clustering evaluation: the BIC variant used for the
//! penalized fitters, the adjusted Rand index, and the bipartite spectral
//! co-clustering baseline.
//!
//! Note the BIC here is of the form `2 * loglik - penalty` and is therefore
//! MAXIMIZED for selection, unlike the `-2 * loglik + penalty` convention
//! some libraries use.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans;
use crate::laplacian::tsym;
use crate::linalg;
use crate::model::MvmmModel;

/// `2 * log_lik - (dof_theta + support_size - 1) * log(n)`. Larger is
/// better.
pub fn bic(log_lik: f64, dof_theta: usize, support_size: usize, n: usize) -> f64 {
    assert!(n >= 1, "BIC needs at least one observation");
    2.0 * log_lik - ((dof_theta + support_size - 1) as f64) * (n as f64).ln()
}

/// Degrees of freedom of the cluster parameters for diagonal Gaussians:
/// mean + variance per coordinate, summed over views and components.
pub fn dof_diag_gaussian(model: &MvmmModel) -> usize {
    model.num_cluster_parameters()
}

/// Adjusted Rand index between two labelings, in `[-1, 1]`.
pub fn ari<T, U>(a: &[T], b: &[U]) -> Result<f64>
where
    T: std::hash::Hash + Eq + Copy,
    U: std::hash::Hash + Eq + Copy,
{
    use std::collections::HashMap;
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "label vectors have different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty labelings".into()));
    }
    let comb2 = |m: usize| (m * m.saturating_sub(1)) as f64 / 2.0;
    let mut cont: HashMap<(T, U), usize> = HashMap::new();
    let mut rows: HashMap<T, usize> = HashMap::new();
    let mut cols: HashMap<U, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        *cont.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = cont.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-300 {
        // Both labelings are trivial in the same way.
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Joint row/column cluster labels from bipartite spectral co-clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoClusters {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

/// Bipartite spectral co-clustering of a nonnegative matrix into `b`
/// groups: take the top `b` singular vectors of `tsym`, stack the
/// degree-normalized row and column embeddings, and k-means the `R + C`
/// points jointly.
pub fn bipartite_spectral_coclustering(
    pi_hat: &Array2<f64>,
    b: usize,
    seed: u64,
) -> Result<CoClusters> {
    let (r, c) = pi_hat.dim();
    if b == 0 || b > r.min(c) {
        return Err(Error::InvalidInput(format!(
            "cannot co-cluster a {r}x{c} table into {b} groups"
        )));
    }
    if b == 1 {
        return Ok(CoClusters {
            row_labels: vec![0; r],
            col_labels: vec![0; c],
        });
    }
    let t = tsym(pi_hat);
    let (u_left, _sigma, u_right) = linalg::svd_thin(&t);
    let row_sums = pi_hat.sum_axis(ndarray::Axis(1));
    let col_sums = pi_hat.sum_axis(ndarray::Axis(0));
    let rs: Array1<f64> = row_sums.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let cs: Array1<f64> = col_sums.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let mut embedding = Array2::zeros((r + c, b));
    for j in 0..b {
        for i in 0..r {
            embedding[[i, j]] = rs[i] * u_left[[i, j]];
        }
        for i in 0..c {
            embedding[[r + i, j]] = cs[i] * u_right[[i, j]];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = kmeans::kmeans(&embedding, b, 10, 200, &mut rng)?;
    Ok(CoClusters {
        row_labels: fit.labels[..r].to_vec(),
        col_labels: fit.labels[r..].to_vec(),
    })
}

/// Everything recorded about one candidate during a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateReport {
    pub hyperparam: f64,
    pub bic: f64,
    pub log_lik: f64,
    pub dof: usize,
    pub support_size: usize,
    pub num_blocks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<CandidateReport>,
    /// Index of the BIC-maximizing candidate.
    pub chosen: usize,
}

impl SelectionReport {
    pub fn chosen_candidate(&self) -> &CandidateReport {
        &self.candidates[self.chosen]
    }

    /// Candidate whose recorded quantity is closest to a target value
    /// (used to evaluate "at the truth" when the exact value is not on the
    /// grid).
    pub fn closest_by<F>(&self, target: f64, f: F) -> usize
    where
        F: Fn(&CandidateReport) -> f64,
    {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (i, cand) in self.candidates.iter().enumerate() {
            let g = (f(cand) - target).abs();
            if g < gap {
                gap = g;
                best = i;
            }
        }
        best
    }
}

/// Summary a fitter must produce for one candidate.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub log_lik: f64,
    pub dof: usize,
    pub support_size: usize,
    pub num_blocks: usize,
}

/// Fit every candidate, compute the BIC of each, and return the argmax.
/// Candidates run in parallel; results are merged in candidate order so the
/// report is deterministic.
pub fn sweep_and_select<F>(fitter: F, candidates: &[f64], n: usize) -> Result<SelectionReport>
where
    F: Fn(f64) -> Result<FitSummary> + Sync,
{
    use rayon::prelude::*;
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty candidate list".into()));
    }
    let summaries: Vec<Result<FitSummary>> = candidates
        .par_iter()
        .map(|&cand| fitter(cand))
        .collect();
    let mut reports = Vec::with_capacity(candidates.len());
    for (cand, summary) in candidates.iter().zip(summaries) {
        let s = summary?;
        reports.push(CandidateReport {
            hyperparam: *cand,
            bic: bic(s.log_lik, s.dof, s.support_size, n),
            log_lik: s.log_lik,
            dof: s.dof,
            support_size: s.support_size,
            num_blocks: s.num_blocks,
        });
    }
    let chosen = reports
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.bic.total_cmp(&b.bic))
        .map(|(i, _)| i)
        .expect("nonempty");
    Ok(SelectionReport {
        candidates: reports,
        chosen,
    })
}
