//! The multi-view mixture model: joint densities, E-step responsibilities,
//! and the unpenalized EM fitter.
//!
//! Observations carry one latent label per view; the joint label
//! distribution is the cluster membership probability table `pi`. Views are
//! conditionally independent given the labels, so the observed density is a
//! mixture over label tuples of products of per-view component densities.
//! All accumulation happens in log space.

use ndarray::{Array1, Array2, ArrayD, ArrayView1, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans;
use crate::mixtures::{
    FitTrace, GaussianDiagComponent, ViewModel, log_density_matrix, log_sum_exp,
    regularization_floor, weighted_mle_update,
};

/// Cluster membership probability table: nonnegative, sums to one.
#[derive(Debug, Clone)]
pub struct ProbTable {
    values: ArrayD<f64>,
}

impl ProbTable {
    /// Validates nonnegativity and total mass `1 ± 1e-10`. Zero view
    /// marginals make the model unidentifiable; they are logged as a
    /// warning rather than rejected.
    pub fn new(values: ArrayD<f64>) -> Result<Self> {
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "probability table has negative entries".into(),
            ));
        }
        let total = values.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "probability table sums to {total}, not 1"
            )));
        }
        let table = ProbTable { values };
        for v in 0..table.num_views() {
            if table.view_marginal(v).iter().any(|&m| m <= 0.0) {
                log::warn!("view {v} has a zero marginal cluster probability");
            }
        }
        Ok(table)
    }

    /// Normalize a nonnegative table to total mass exactly one.
    pub fn from_unnormalized(values: ArrayD<f64>) -> Result<Self> {
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "probability table has negative entries".into(),
            ));
        }
        let total = values.sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("probability table is all zero".into()));
        }
        ProbTable::new(values.mapv(|v| v / total))
    }

    pub fn uniform(shape: &[usize]) -> Self {
        let cells: usize = shape.iter().product();
        ProbTable {
            values: ArrayD::from_elem(IxDyn(shape), 1.0 / cells as f64),
        }
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn num_views(&self) -> usize {
        self.values.ndim()
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    /// Flat cell values in row-major (last axis fastest) order.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }

    /// Marginal label distribution of one view.
    pub fn view_marginal(&self, view: usize) -> Array1<f64> {
        let k = self.shape()[view];
        let mut out = Array1::zeros(k);
        for (idx, &v) in self.values.indexed_iter() {
            out[idx[view]] += v;
        }
        out
    }

    /// Flat indices of strictly positive cells, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Decode a flat cell index into a per-view label tuple.
    pub fn tuple_of_flat(&self, flat: usize) -> Vec<usize> {
        decode_flat(flat, self.shape())
    }

    /// Two-view tables as a matrix.
    pub fn as_matrix(&self) -> Result<Array2<f64>> {
        if self.num_views() != 2 {
            return Err(Error::Shape(format!(
                "expected a two-view table, got {} axes",
                self.num_views()
            )));
        }
        let (r, c) = (self.shape()[0], self.shape()[1]);
        Ok(Array2::from_shape_fn((r, c), |(i, j)| {
            self.values[IxDyn(&[i, j])]
        }))
    }

    pub fn from_matrix(m: &Array2<f64>) -> Result<Self> {
        ProbTable::new(m.clone().into_dyn())
    }
}

pub(crate) fn decode_flat(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0; shape.len()];
    for v in (0..shape.len()).rev() {
        tuple[v] = flat % shape[v];
        flat /= shape[v];
    }
    tuple
}

/// Multi-view data set: one matrix per view, rows aligned across views.
#[derive(Debug, Clone)]
pub struct MultiViewData {
    views: Vec<Array2<f64>>,
}

impl MultiViewData {
    pub fn new(views: Vec<Array2<f64>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidInput("need at least one view".into()));
        }
        let n = views[0].nrows();
        if views.iter().any(|v| v.nrows() != n) {
            return Err(Error::Shape(
                "views have different numbers of observations".into(),
            ));
        }
        Ok(MultiViewData { views })
    }

    pub fn n(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, v: usize) -> &Array2<f64> {
        &self.views[v]
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    /// Column-concatenated data for single-view baselines.
    pub fn concatenated(&self) -> Array2<f64> {
        let n = self.n();
        let total: usize = self.dims().iter().sum();
        let mut out = Array2::zeros((n, total));
        let mut offset = 0;
        for v in &self.views {
            for i in 0..n {
                for j in 0..v.ncols() {
                    out[[i, offset + j]] = v[[i, j]];
                }
            }
            offset += v.ncols();
        }
        out
    }

    /// Restrict to a subset of rows (for train/test splits).
    pub fn select_rows(&self, rows: &[usize]) -> MultiViewData {
        let views = self
            .views
            .iter()
            .map(|v| {
                Array2::from_shape_fn((rows.len(), v.ncols()), |(i, j)| v[[rows[i], j]])
            })
            .collect();
        MultiViewData { views }
    }
}

/// The fitted model: per-view Gaussian components plus the joint table.
#[derive(Debug, Clone)]
pub struct MvmmModel {
    pub views: Vec<ViewModel>,
    pub pi: ProbTable,
}

impl MvmmModel {
    pub fn new(views: Vec<ViewModel>, pi: ProbTable) -> Result<Self> {
        let ks: Vec<usize> = views.iter().map(|v| v.k()).collect();
        if ks != pi.shape() {
            return Err(Error::Shape(format!(
                "pi shape {:?} does not match per-view component counts {:?}",
                pi.shape(),
                ks
            )));
        }
        Ok(MvmmModel { views, pi })
    }

    pub fn k(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.k()).collect()
    }

    /// Total free cluster-parameter count: mean + variance per coordinate,
    /// additively over views (parameter sharing across the joint clusters).
    pub fn num_cluster_parameters(&self) -> usize {
        self.views.iter().map(|v| v.k() * 2 * v.dim).sum()
    }
}

/// Per-cell log `pi` plus per-view log densities, the shared core of the
/// E-step and the likelihood.
fn cell_log_scores(m: &MvmmModel, data: &MultiViewData) -> (Vec<Vec<usize>>, Array2<f64>) {
    let n = data.n();
    let shape = m.pi.shape().to_vec();
    let cells = m.pi.num_cells();
    let tuples: Vec<Vec<usize>> = (0..cells).map(|t| decode_flat(t, &shape)).collect();
    let log_pi: Vec<f64> = m
        .pi
        .values()
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let view_logd: Vec<Array2<f64>> = m
        .views
        .iter()
        .zip(data.views())
        .map(|(vm, vd)| log_density_matrix(vm, vd))
        .collect();
    let mut scores = Array2::from_elem((n, cells), f64::NEG_INFINITY);
    for i in 0..n {
        for (t, tuple) in tuples.iter().enumerate() {
            if log_pi[t] == f64::NEG_INFINITY {
                continue;
            }
            let mut acc = log_pi[t];
            for (v, &kv) in tuple.iter().enumerate() {
                acc += view_logd[v][[i, kv]];
            }
            scores[[i, t]] = acc;
        }
    }
    (tuples, scores)
}

/// Log observed density of a single concatenated observation.
pub fn observed_log_density(m: &MvmmModel, x: ArrayView1<f64>) -> Result<f64> {
    let dims: Vec<usize> = m.views.iter().map(|v| v.dim).collect();
    let total: usize = dims.iter().sum();
    if x.len() != total {
        return Err(Error::Shape(format!(
            "observation has {} coordinates, model expects {total}",
            x.len()
        )));
    }
    let mut views = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &d in &dims {
        views.push(
            Array2::from_shape_fn((1, d), |(_, j)| x[off + j]),
        );
        off += d;
    }
    let data = MultiViewData::new(views)?;
    Ok(log_likelihood(m, &data))
}

/// Observed-data log likelihood.
pub fn log_likelihood(m: &MvmmModel, data: &MultiViewData) -> f64 {
    let (_, scores) = cell_log_scores(m, data);
    let mut ll = 0.0;
    let mut buf = vec![0.0; scores.ncols()];
    for i in 0..data.n() {
        for t in 0..scores.ncols() {
            buf[t] = scores[[i, t]];
        }
        ll += log_sum_exp(&buf);
    }
    ll
}

/// Posterior responsibilities over label tuples.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    /// `n x num_cells`, each row sums to one; cells with `pi = 0` are
    /// exactly zero.
    pub gamma: Array2<f64>,
    /// Mean responsibility per cell (the unpenalized `pi` update).
    pub average: ProbTable,
    /// Observed log likelihood at the parameters the E-step used.
    pub log_likelihood: f64,
}

pub fn e_step(m: &MvmmModel, data: &MultiViewData) -> Responsibilities {
    let n = data.n();
    let (_, mut scores) = cell_log_scores(m, data);
    let cells = scores.ncols();
    let mut ll = 0.0;
    let mut buf = vec![0.0; cells];
    for i in 0..n {
        for t in 0..cells {
            buf[t] = scores[[i, t]];
        }
        let norm = log_sum_exp(&buf);
        ll += norm;
        for t in 0..cells {
            let s = scores[[i, t]];
            scores[[i, t]] = if s == f64::NEG_INFINITY {
                0.0
            } else {
                (s - norm).exp()
            };
        }
    }
    let mut avg = ArrayD::zeros(IxDyn(m.pi.shape()));
    {
        let flat = avg.as_slice_mut().expect("contiguous");
        for i in 0..n {
            for t in 0..cells {
                flat[t] += scores[[i, t]];
            }
        }
        for v in flat.iter_mut() {
            *v /= n as f64;
        }
    }
    let average = ProbTable::from_unnormalized(avg).expect("average responsibilities normalize");
    Responsibilities {
        gamma: scores,
        average,
        log_likelihood: ll,
    }
}

/// Marginalize responsibilities onto one view: `n x K_v` weights.
pub fn view_weights(gamma: &Array2<f64>, shape: &[usize], view: usize) -> Array2<f64> {
    let n = gamma.nrows();
    let k = shape[view];
    let mut out = Array2::zeros((n, k));
    for t in 0..gamma.ncols() {
        let kv = decode_flat(t, shape)[view];
        for i in 0..n {
            out[[i, kv]] += gamma[[i, t]];
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    /// Number of clusters per view.
    pub k: Vec<usize>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub n_init: usize,
    pub reg_scale: f64,
    pub seed: u64,
}

impl EmConfig {
    pub fn new(k: Vec<usize>, seed: u64) -> Self {
        EmConfig {
            k,
            max_iter: 300,
            rel_tol: 1e-8,
            n_init: 10,
            reg_scale: 1e-6,
            seed,
        }
    }
}

/// Initialize per-view components with k-means cluster centers (k-means++
/// seeded) and data variances, and a uniform `pi`.
pub(crate) fn init_model(
    data: &MultiViewData,
    k: &[usize],
    reg_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MvmmModel> {
    let mut views = Vec::with_capacity(k.len());
    for (v, &kv) in k.iter().enumerate() {
        let vd = data.view(v);
        let floor = regularization_floor(vd, reg_scale);
        let var = floor.mapv(|f| (f / reg_scale).max(1e-6));
        let fit = kmeans::kmeans(vd, kv, 1, 50, rng)?;
        views.push(ViewModel {
            components: (0..kv)
                .map(|c| GaussianDiagComponent {
                    mean: fit.centers.row(c).to_owned(),
                    variance: var.clone(),
                })
                .collect(),
            dim: vd.ncols(),
        });
    }
    MvmmModel::new(views, ProbTable::uniform(k))
}

fn check_fit_inputs(data: &MultiViewData, k: &[usize]) -> Result<()> {
    if k.len() != data.num_views() {
        return Err(Error::Shape(format!(
            "{} cluster counts for {} views",
            k.len(),
            data.num_views()
        )));
    }
    if k.iter().any(|&kv| kv == 0) {
        return Err(Error::InvalidInput("cluster counts must be positive".into()));
    }
    let kmax = *k.iter().max().expect("nonempty k");
    if data.n() < kmax {
        return Err(Error::InvalidInput(format!(
            "{} observations cannot support {kmax} clusters in a view",
            data.n()
        )));
    }
    Ok(())
}

/// One EM pass from a given starting model. The `pi` update and the tracked
/// objective are pluggable so the penalized fitters can reuse the loop:
/// `pi_update` maps the E-step average `a` to the next table and
/// `objective` maps (model, log-likelihood) to the monitored quantity.
pub(crate) fn run_em<F, G>(
    data: &MultiViewData,
    mut model: MvmmModel,
    max_iter: usize,
    rel_tol: f64,
    reg_scale: f64,
    mut pi_update: F,
    objective: G,
) -> Result<(MvmmModel, Vec<f64>, bool, usize)>
where
    F: FnMut(&ProbTable) -> Result<ProbTable>,
    G: Fn(&MvmmModel, f64) -> f64,
{
    let floors: Vec<Array1<f64>> = data
        .views()
        .iter()
        .map(|v| regularization_floor(v, reg_scale))
        .collect();
    let shape = model.pi.shape().to_vec();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let resp = e_step(&model, data);
        let obj = objective(&model, resp.log_likelihood);
        if let Some(&prev) = trace.last() {
            trace.push(obj);
            if obj + 1e-9 * (prev.abs() + 1.0) < prev {
                log::debug!("EM objective decreased by {:e}", prev - obj);
            }
            if (obj - prev).abs() <= rel_tol * (prev.abs() + 1.0) {
                converged = true;
                break;
            }
        } else {
            trace.push(obj);
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        for v in 0..data.num_views() {
            let weights = view_weights(&resp.gamma, &shape, v);
            let out = weighted_mle_update(data.view(v), &weights, &model.views[v], &floors[v]);
            if !out.frozen.is_empty() {
                log::debug!("view {v}: components {:?} frozen (zero weight)", out.frozen);
            }
            model.views[v] = out.model;
        }
        model.pi = pi_update(&resp.average)?;
    }
    Ok((model, trace, converged, iterations))
}

/// Fit the MVMM by EM: responsibilities, per-view weighted MLE, `pi <- a`.
/// `n_init` k-means++ restarts, best final log-likelihood kept.
pub fn fit_em(data: &MultiViewData, config: &EmConfig) -> Result<(MvmmModel, FitTrace)> {
    check_fit_inputs(data, &config.k)?;
    let mut best: Option<(MvmmModel, FitTrace)> = None;
    for restart in 0..config.n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let model = init_model(data, &config.k, config.reg_scale, &mut rng)?;
        let (model, trace, converged, iterations) = run_em(
            data,
            model,
            config.max_iter,
            config.rel_tol,
            config.reg_scale,
            |a| Ok(a.clone()),
            |_, ll| ll,
        )?;
        let final_ll = *trace.last().expect("at least one E-step");
        let better = best
            .as_ref()
            .is_none_or(|(_, t)| final_ll > *t.objective.last().unwrap());
        if better {
            best = Some((
                model,
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

/// Hard label assignments from a fitted model.
#[derive(Debug, Clone)]
pub struct Predictions {
    /// Argmax label tuple per observation.
    pub tuple: Vec<Vec<usize>>,
    /// Index into the support of `pi` (canonical ascending flat order).
    pub overall: Vec<usize>,
    /// Per view: argmax of the view-marginalized responsibilities.
    pub per_view: Vec<Vec<usize>>,
}

pub fn predict(m: &MvmmModel, data: &MultiViewData) -> Predictions {
    let resp = e_step(m, data);
    let support = m.pi.support();
    let shape = m.pi.shape().to_vec();
    let n = data.n();

    let mut overall = Vec::with_capacity(n);
    let mut tuple = Vec::with_capacity(n);
    for i in 0..n {
        let mut arg = 0usize;
        let mut best = f64::NEG_INFINITY;
        for (pos, &t) in support.iter().enumerate() {
            let g = resp.gamma[[i, t]];
            if g > best {
                best = g;
                arg = pos;
            }
        }
        overall.push(arg);
        tuple.push(decode_flat(support[arg], &shape));
    }

    let per_view = (0..shape.len())
        .map(|v| {
            let weights = view_weights(&resp.gamma, &shape, v);
            (0..n)
                .map(|i| {
                    let mut arg = 0;
                    let mut best = f64::NEG_INFINITY;
                    for kv in 0..shape[v] {
                        if weights[[i, kv]] > best {
                            best = weights[[i, kv]];
                            arg = kv;
                        }
                    }
                    arg
                })
                .collect()
        })
        .collect();

    Predictions {
        tuple,
        overall,
        per_view,
    }
}
