//! Synthetic data generation and the Monte-Carlo experiment runner.
//!
//! Data follow the generative model: a label tuple is drawn from a designed
//! membership table `pi`, then each view is sampled from the corresponding
//! isotropic Gaussian component whose mean was itself drawn once per
//! Monte-Carlo repetition. RNG streams are derived per (repetition, sample
//! size, method) from a counter-based generator, so runs are reproducible
//! and parallelism never changes results.

use ndarray::{Array2, ArrayD, IxDyn};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::bd::{self, BdConfig};
use crate::error::{Error, Result};
use crate::laplacian::{self, BlockStructure};
use crate::log_pen::{self, LogPenConfig};
use crate::mixtures::{self, GaussianDiagComponent, GmmConfig, ViewModel};
use crate::model::{self, EmConfig, MultiViewData, MvmmModel, ProbTable};
use crate::select::{self, FitSummary};

fn default_shape() -> usize {
    10
}

/// The synthetic membership-table designs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum PiDesign {
    /// `num_blocks` square blocks of side `block_size`, all entries equal.
    Beads { num_blocks: usize, block_size: usize },
    /// `singletons` 1x1 blocks plus one `big_block` x `big_block` block;
    /// every block carries the same total mass.
    Lollipop { singletons: usize, big_block: usize },
    /// `nnz` uniformly chosen support cells with equal mass, resampled
    /// until every row and column marginal is positive.
    SparseRandom {
        nnz: usize,
        #[serde(default = "default_shape")]
        k1: usize,
        #[serde(default = "default_shape")]
        k2: usize,
    },
    /// Diagonal table (consensus clustering).
    Diagonal { k: usize },
    /// Rank-one table with uniform marginals (independent views).
    RankOne { k1: usize, k2: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub pi: PiDesign,
    /// Standard deviation of the cluster-mean distribution, one per view.
    pub sigma_mean: Vec<f64>,
    /// Feature dimension per view.
    pub dims: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub reps: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn beads_default(seed: u64) -> Self {
        SimConfig {
            pi: PiDesign::Beads {
                num_blocks: 5,
                block_size: 2,
            },
            sigma_mean: vec![1.0, 0.5],
            dims: vec![10, 10],
            n_train: 2000,
            n_test: 2000,
            reps: 5,
            seed,
        }
    }
}

/// Build the designed membership table.
pub fn make_pi(design: &PiDesign, rng: &mut ChaCha8Rng) -> Result<ProbTable> {
    match *design {
        PiDesign::Beads {
            num_blocks,
            block_size,
        } => {
            if num_blocks == 0 || block_size == 0 {
                return Err(Error::InvalidInput("empty beads design".into()));
            }
            let k = num_blocks * block_size;
            let mass = 1.0 / (num_blocks * block_size * block_size) as f64;
            let mut vals = ArrayD::zeros(IxDyn(&[k, k]));
            for b in 0..num_blocks {
                for i in 0..block_size {
                    for j in 0..block_size {
                        vals[IxDyn(&[b * block_size + i, b * block_size + j])] = mass;
                    }
                }
            }
            ProbTable::new(vals)
        }
        PiDesign::Lollipop {
            singletons,
            big_block,
        } => {
            if big_block == 0 {
                return Err(Error::InvalidInput("lollipop needs a big block".into()));
            }
            let k = singletons + big_block;
            let blocks = singletons + 1;
            let per_block = 1.0 / blocks as f64;
            let mut vals = ArrayD::zeros(IxDyn(&[k, k]));
            for s in 0..singletons {
                vals[IxDyn(&[s, s])] = per_block;
            }
            let cell = per_block / (big_block * big_block) as f64;
            for i in 0..big_block {
                for j in 0..big_block {
                    vals[IxDyn(&[singletons + i, singletons + j])] = cell;
                }
            }
            ProbTable::new(vals)
        }
        PiDesign::SparseRandom { nnz, k1, k2 } => {
            if nnz < k1.max(k2) {
                return Err(Error::InvalidInput(format!(
                    "{nnz} cells cannot cover all {k1} rows and {k2} columns"
                )));
            }
            // Resample until every marginal is positive.
            for _ in 0..10_000 {
                let mut chosen = std::collections::HashSet::new();
                while chosen.len() < nnz {
                    chosen.insert((rng.random_range(0..k1), rng.random_range(0..k2)));
                }
                let mut rows = vec![false; k1];
                let mut cols = vec![false; k2];
                for &(i, j) in &chosen {
                    rows[i] = true;
                    cols[j] = true;
                }
                if rows.iter().all(|&r| r) && cols.iter().all(|&c| c) {
                    let mass = 1.0 / nnz as f64;
                    let mut vals = ArrayD::zeros(IxDyn(&[k1, k2]));
                    for &(i, j) in &chosen {
                        vals[IxDyn(&[i, j])] = mass;
                    }
                    return ProbTable::new(vals);
                }
            }
            Err(Error::InvalidInput(
                "could not draw a sparse design with positive marginals".into(),
            ))
        }
        PiDesign::Diagonal { k } => {
            let mut vals = ArrayD::zeros(IxDyn(&[k, k]));
            for i in 0..k {
                vals[IxDyn(&[i, i])] = 1.0 / k as f64;
            }
            ProbTable::new(vals)
        }
        PiDesign::RankOne { k1, k2 } => {
            let vals = ArrayD::from_elem(IxDyn(&[k1, k2]), 1.0 / (k1 * k2) as f64);
            ProbTable::new(vals)
        }
    }
}

/// Draw per-view cluster means from `N(0, sigma_mean^2 I)`; identity
/// covariances.
pub fn sample_model(
    pi: &ProbTable,
    sigma_mean: &[f64],
    dims: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<MvmmModel> {
    if sigma_mean.len() != pi.num_views() || dims.len() != pi.num_views() {
        return Err(Error::Shape(
            "sigma_mean and dims must have one entry per view".into(),
        ));
    }
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let views = pi
        .shape()
        .iter()
        .zip(sigma_mean.iter().zip(dims.iter()))
        .map(|(&kv, (&sigma, &d))| ViewModel {
            components: (0..kv)
                .map(|_| GaussianDiagComponent {
                    mean: ndarray::Array1::from_shape_fn(d, |_| sigma * normal.sample(rng)),
                    variance: ndarray::Array1::ones(d),
                })
                .collect(),
            dim: d,
        })
        .collect();
    MvmmModel::new(views, pi.clone())
}

/// True labels attached to a sampled dataset.
#[derive(Debug, Clone)]
pub struct TruthLabels {
    /// Flat cell index into `pi` per observation.
    pub cell: Vec<usize>,
    /// Position of the cell within the support of `pi` (canonical order).
    pub overall: Vec<usize>,
    /// Per view labels.
    pub per_view: Vec<Vec<usize>>,
    /// Block index of the cell under the block structure of `pi`.
    pub block: Vec<usize>,
    pub blocks: BlockStructure,
}

/// Sample a dataset of `n` observations from the generative model.
pub fn sample_dataset(
    model: &MvmmModel,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(MultiViewData, TruthLabels)> {
    let flat = model.pi.flat();
    let support = model.pi.support();
    let shape = model.pi.shape().to_vec();
    let blocks = laplacian::count_blocks(
        &model.pi.values().view(),
        laplacian::default_support_tol(&model.pi.values().view()),
    );
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");

    let mut views: Vec<Array2<f64>> = model
        .views
        .iter()
        .map(|v| Array2::zeros((n, v.dim)))
        .collect();
    let mut cell_labels = Vec::with_capacity(n);
    let mut overall = Vec::with_capacity(n);
    let mut per_view: Vec<Vec<usize>> = vec![Vec::with_capacity(n); shape.len()];
    let mut block = Vec::with_capacity(n);
    for i in 0..n {
        // Inverse-CDF draw over the flat table.
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cell = flat.len() - 1;
        for (t, &p) in flat.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = t;
                break;
            }
        }
        let tuple = model.pi.tuple_of_flat(cell);
        cell_labels.push(cell);
        overall.push(
            support
                .binary_search(&cell)
                .expect("sampled cell is in the support"),
        );
        block.push(
            blocks.axis_block[0][tuple[0]].expect("support cell belongs to a block"),
        );
        for (v, &kv) in tuple.iter().enumerate() {
            per_view[v].push(kv);
            let comp = &model.views[v].components[kv];
            for j in 0..model.views[v].dim {
                views[v][[i, j]] =
                    comp.mean[j] + comp.variance[j].sqrt() * normal.sample(rng);
            }
        }
    }
    Ok((
        MultiViewData::new(views)?,
        TruthLabels {
            cell: cell_labels,
            overall,
            per_view,
            block,
            blocks,
        },
    ))
}

/// Methods the experiment runner can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mvmm,
    Cat,
    Log,
    Bd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mvmm => "mvmm",
            Method::Cat => "cat",
            Method::Log => "log",
            Method::Bd => "bd",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub methods: Vec<Method>,
    /// Training sizes; defaults to the standard grid when empty.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    /// Lambda grid for the log fitter (defaults to the geometric grid).
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    /// Block-count grid for the bd fitter (defaults to `1..=min(K)`).
    #[serde(default)]
    pub b_grid: Vec<usize>,
    /// Also compute BIC selections over the grids.
    #[serde(default = "default_true")]
    pub with_bic: bool,
}

fn default_true() -> bool {
    true
}

pub fn default_n_grid() -> Vec<usize> {
    vec![200, 500, 1000, 1500, 2000, 2500, 3000, 3500, 4000]
}

/// One long-format result record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub rep: usize,
    pub method: String,
    pub n: usize,
    pub hyperparam: f64,
    pub metric: String,
    pub value: f64,
}

/// Derived RNG for a (repetition, slot) pair; slots keep streams disjoint
/// across uses so parallel execution cannot change results.
fn stream_rng(seed: u64, rep: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep as u64) << 16 | slot);
    rng
}

fn derived_seed(seed: u64, rep: usize, slot: u64) -> u64 {
    seed ^ ((rep as u64) << 24) ^ (slot << 8)
}

struct RepContext<'a> {
    cfg: &'a ExperimentConfig,
    pi_true: &'a ProbTable,
    truth_support: usize,
    truth_blocks: usize,
}

/// Run the full Monte-Carlo comparison; returns long-format rows sorted by
/// (rep, n, method).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let mut pi_rng = stream_rng(cfg.sim.seed, 0, 0);
    let pi_true = make_pi(&cfg.sim.pi, &mut pi_rng)?;
    let truth_support = pi_true.support_size();
    let truth_blocks = laplacian::count_blocks(
        &pi_true.values().view(),
        laplacian::default_support_tol(&pi_true.values().view()),
    )
    .num_blocks;
    let n_grid = if cfg.n_grid.is_empty() {
        default_n_grid()
    } else {
        cfg.n_grid.clone()
    };
    let ctx = RepContext {
        cfg,
        pi_true: &pi_true,
        truth_support,
        truth_blocks,
    };

    let mut rows = Vec::new();
    for rep in 0..cfg.sim.reps {
        // Cluster means are drawn once per repetition.
        let mut model_rng = stream_rng(cfg.sim.seed, rep, 1);
        let truth_model = sample_model(&pi_true, &cfg.sim.sigma_mean, &cfg.sim.dims, &mut model_rng)?;
        for (n_idx, &n) in n_grid.iter().enumerate() {
            let slot = 2 + 2 * n_idx as u64;
            let mut data_rng = stream_rng(cfg.sim.seed, rep, slot);
            let (train, _train_truth) = sample_dataset(&truth_model, n, &mut data_rng)?;
            let mut test_rng = stream_rng(cfg.sim.seed, rep, slot + 1);
            let (test, test_truth) = sample_dataset(&truth_model, cfg.sim.n_test, &mut test_rng)?;
            for (m_idx, &method) in cfg.methods.iter().enumerate() {
                let fit_seed = derived_seed(cfg.sim.seed, rep, slot * 100 + m_idx as u64);
                let result =
                    run_method(&ctx, method, &train, &test, &test_truth, fit_seed, rep, n);
                match result {
                    Ok(mut r) => rows.append(&mut r),
                    Err(e) => {
                        log::warn!("rep {rep} n {n} {}: {e}", method.name());
                        rows.push(ResultRow {
                            rep,
                            method: method.name().into(),
                            n,
                            hyperparam: f64::NAN,
                            metric: "error".into(),
                            value: 1.0,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    ctx: &RepContext<'_>,
    method: Method,
    train: &MultiViewData,
    test: &MultiViewData,
    test_truth: &TruthLabels,
    fit_seed: u64,
    rep: usize,
    n: usize,
) -> Result<Vec<ResultRow>> {
    let k: Vec<usize> = ctx.pi_true.shape().to_vec();
    let mut rows = Vec::new();
    let mut push = |hyper: f64, metric: &str, value: f64| {
        rows.push(ResultRow {
            rep,
            method: method.name().into(),
            n,
            hyperparam: hyper,
            metric: metric.into(),
            value,
        });
    };

    match method {
        Method::Mvmm => {
            let em = EmConfig::new(k.clone(), fit_seed);
            let (model, _) = model::fit_em(train, &em)?;
            let pred = model::predict(&model, test);
            push(
                f64::NAN,
                "overall_ari_truth",
                select::ari(&pred.overall, &test_truth.overall)?,
            );
            // Baseline block labels: bipartite spectral co-clustering of the
            // fitted table; an observation inherits the row label of its
            // predicted first-view cluster.
            let pi_hat = model.pi.as_matrix()?;
            let cc =
                select::bipartite_spectral_coclustering(&pi_hat, ctx.truth_blocks, fit_seed)?;
            let block_pred: Vec<usize> =
                pred.tuple.iter().map(|t| cc.row_labels[t[0]]).collect();
            push(
                f64::NAN,
                "block_ari_truth",
                select::ari(&block_pred, &test_truth.block)?,
            );
            push(f64::NAN, "support_size", model.pi.support_size() as f64);
        }
        Method::Cat => {
            let concat_train = train.concatenated();
            let concat_test = test.concatenated();
            let gmm = GmmConfig::new(ctx.truth_support, fit_seed);
            let (view, mixing, _) = mixtures::fit_gmm(&concat_train, &gmm)?;
            let pred = mixtures::predict_gmm(&view, &mixing, &concat_test);
            push(
                ctx.truth_support as f64,
                "overall_ari_truth",
                select::ari(&pred, &test_truth.overall)?,
            );
        }
        Method::Log => {
            let cells: usize = k.iter().product();
            let grid = if ctx.cfg.lambda_grid.is_empty() {
                log_pen::lambda_grid(cells, 20)
            } else {
                ctx.cfg.lambda_grid.clone()
            };
            let fits = fit_log_grid(train, &k, &grid, fit_seed)?;
            let report = grid_report(&fits, &grid, train);
            // "At the truth": the candidate whose support size is closest
            // to the true one.
            let at_truth = report.closest_by(ctx.truth_support as f64, |c| c.support_size as f64);
            let eval = |idx: usize, tag: &str, rows: &mut dyn FnMut(f64, &str, f64)| -> Result<()> {
                let (model, _) = &fits[idx];
                let pred = model::predict(model, test);
                rows(
                    grid[idx],
                    &format!("overall_ari_{tag}"),
                    select::ari(&pred.overall, &test_truth.overall)?,
                );
                let pi_hat = model.pi.as_matrix()?;
                let blocks = laplacian::count_blocks_matrix(
                    &pi_hat,
                    laplacian::default_support_tol(&pi_hat.view().into_dyn()),
                );
                let block_pred: Vec<usize> = pred
                    .tuple
                    .iter()
                    .map(|t| blocks.row_block()[t[0]].unwrap_or(0))
                    .collect();
                rows(
                    grid[idx],
                    &format!("block_ari_{tag}"),
                    select::ari(&block_pred, &test_truth.block)?,
                );
                rows(
                    grid[idx],
                    &format!("support_size_{tag}"),
                    model.pi.support_size() as f64,
                );
                Ok(())
            };
            eval(at_truth, "truth", &mut push)?;
            if ctx.cfg.with_bic {
                let chosen = report.chosen;
                push(grid[chosen], "bic_selected_support", report.candidates[chosen].support_size as f64);
                eval(chosen, "bic", &mut push)?;
            }
        }
        Method::Bd => {
            let b_grid = if ctx.cfg.b_grid.is_empty() {
                (1..=k[0].min(k[1])).collect()
            } else {
                ctx.cfg.b_grid.clone()
            };
            // "At the truth": fit directly at the true block count.
            let fit = fit_bd_at(train, &k, ctx.truth_blocks, fit_seed)?;
            let block_pred = bd::predict_block_labels(&fit.model, &fit.blocks, test);
            push(
                ctx.truth_blocks as f64,
                "block_ari_truth",
                select::ari(&block_pred, &test_truth.block)?,
            );
            let pred = model::predict(&fit.model, test);
            push(
                ctx.truth_blocks as f64,
                "overall_ari_truth",
                select::ari(&pred.overall, &test_truth.overall)?,
            );
            push(
                ctx.truth_blocks as f64,
                "num_blocks",
                fit.blocks.num_blocks as f64,
            );
            let d_tol = laplacian::default_support_tol(&fit.d.view().into_dyn());
            push(
                ctx.truth_blocks as f64,
                "support_size",
                fit.d.iter().filter(|&&v| v > d_tol).count() as f64,
            );
            if ctx.cfg.with_bic {
                let summaries: Vec<Result<(BdSummary, FitSummary)>> = {
                    use rayon::prelude::*;
                    b_grid
                        .par_iter()
                        .map(|&b| bd_summary(train, &k, b, fit_seed))
                        .collect()
                };
                let mut cands = Vec::new();
                let mut extras = Vec::new();
                for (b, s) in b_grid.iter().zip(summaries) {
                    let (extra, summary) = s?;
                    cands.push((*b as f64, summary));
                    extras.push(extra);
                }
                let report = select::sweep_and_select(
                    |bv| {
                        let idx = cands
                            .iter()
                            .position(|(b, _)| *b == bv)
                            .expect("candidate present");
                        Ok(cands[idx].1.clone())
                    },
                    &cands.iter().map(|(b, _)| *b).collect::<Vec<_>>(),
                    train.n(),
                )?;
                let chosen = report.chosen;
                push(b_grid[chosen] as f64, "bic_selected_blocks", b_grid[chosen] as f64);
                let chosen_fit = &extras[chosen];
                let block_pred =
                    bd::predict_block_labels(&chosen_fit.model, &chosen_fit.blocks, test);
                push(
                    b_grid[chosen] as f64,
                    "block_ari_bic",
                    select::ari(&block_pred, &test_truth.block)?,
                );
                let pred = model::predict(&chosen_fit.model, test);
                push(
                    b_grid[chosen] as f64,
                    "overall_ari_bic",
                    select::ari(&pred.overall, &test_truth.overall)?,
                );
            }
        }
    }
    Ok(rows)
}

struct BdSummary {
    model: MvmmModel,
    blocks: BlockStructure,
}

fn fit_bd_at(train: &MultiViewData, k: &[usize], b: usize, seed: u64) -> Result<bd::BdFit> {
    let em = EmConfig::new(k.to_vec(), seed);
    let cfg = BdConfig::new(b, em);
    bd::fit_bd(train, &cfg)
}

fn bd_summary(
    train: &MultiViewData,
    k: &[usize],
    b: usize,
    seed: u64,
) -> Result<(BdSummary, FitSummary)> {
    let fit = fit_bd_at(train, k, b, seed)?;
    let log_lik = model::log_likelihood(&fit.model, train);
    let d_tol = laplacian::default_support_tol(&fit.d.view().into_dyn());
    let support = fit.d.iter().filter(|&&v| v > d_tol).count();
    let dof = select::dof_diag_gaussian(&fit.model);
    let num_blocks = fit.blocks.num_blocks;
    Ok((
        BdSummary {
            model: fit.model,
            blocks: fit.blocks,
        },
        FitSummary {
            log_lik,
            dof,
            support_size: support,
            num_blocks,
        },
    ))
}

type LogFit = (MvmmModel, crate::mixtures::FitTrace);

fn fit_log_grid(
    train: &MultiViewData,
    k: &[usize],
    grid: &[f64],
    seed: u64,
) -> Result<Vec<LogFit>> {
    use rayon::prelude::*;
    let fits: Vec<Result<LogFit>> = grid
        .par_iter()
        .map(|&lambda| {
            let em = EmConfig::new(k.to_vec(), seed);
            let cfg = LogPenConfig::new(lambda, em);
            log_pen::fit_log_pen(train, &cfg)
        })
        .collect();
    fits.into_iter().collect()
}

fn grid_report(fits: &[LogFit], grid: &[f64], train: &MultiViewData) -> select::SelectionReport {
    let n = train.n();
    let candidates = fits
        .iter()
        .zip(grid)
        .map(|((model, _), &lambda)| {
            let log_lik = model::log_likelihood(model, train);
            let pi_hat = model.pi.as_matrix().ok();
            let num_blocks = pi_hat
                .map(|p| {
                    laplacian::count_blocks_matrix(
                        &p,
                        laplacian::default_support_tol(&p.view().into_dyn()),
                    )
                    .num_blocks
                })
                .unwrap_or(0);
            select::CandidateReport {
                hyperparam: lambda,
                bic: select::bic(
                    log_lik,
                    select::dof_diag_gaussian(model),
                    model.pi.support_size(),
                    n,
                ),
                log_lik,
                dof: select::dof_diag_gaussian(model),
                support_size: model.pi.support_size(),
                num_blocks,
            }
        })
        .collect::<Vec<_>>();
    let chosen = candidates
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.bic.total_cmp(&b.bic))
        .map(|(i, _)| i)
        .unwrap_or(0);
    select::SelectionReport { candidates, chosen }
}
