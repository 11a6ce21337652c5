//! Block diagonally constrained MVMM for two views.
//!
//! The membership table is decomposed as `pi = eps * 1 1^T + D` with `D >= 0`
//! block diagonal: the dense floor absorbs outliers and keeps the likelihood
//! away from exact zeros. The block constraint on `D` is driven by a penalty
//! `alpha * sum_{j<=B} lambda_(j)(L_sym(A_bp(D)))` in its extremal `(D, U)`
//! form. The inner loop alternates the eigen step with an EM step (E-step,
//! per-view weighted MLE, then the convex `D` subproblem); the outer loop
//! doubles `alpha` until the `B` smallest eigenvalues vanish.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::block_diag::{self, ObjectiveOracle, StoppingRule, SubproblemSpec};
use crate::error::{Error, Result};
use crate::geig;
use crate::laplacian::{self, BlockStructure};
use crate::mixtures::{ViewModel, regularization_floor, weighted_mle_update};
use crate::model::{
    EmConfig, MultiViewData, MvmmModel, ProbTable, e_step, fit_em, log_likelihood, view_weights,
};
use crate::solver::{
    KktResiduals, NegLogObjective, SolveOutcome, SolverOptions, minimize_nonneg_eq,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BdConfig {
    /// Target number of blocks, `1 <= b <= min(K1, K2)`.
    pub b: usize,
    /// Dense floor; defaults to `0.01 / (K1 * K2)`.
    pub epsilon: Option<f64>,
    /// Initial eigenvalue-penalty weight; defaults to the median heuristic.
    pub alpha0: Option<f64>,
    /// Escalation multiplier per outer round.
    pub alpha_factor: f64,
    /// Scale constant of the median heuristic.
    pub c_heuristic: f64,
    /// Relative tolerance for the inner alternating loop.
    pub inner_rel_tol: f64,
    pub inner_max_iter: usize,
    /// Eigenvalue sum below which the target block count is declared
    /// reached.
    pub block_tol: f64,
    /// Give up when alpha exceeds this without reaching `b` blocks.
    pub alpha_cap: f64,
    /// Support threshold scale for extracting the block structure
    /// (`support_tol = scale * max D`).
    pub support_tol_scale: f64,
    pub em: EmConfig,
    /// Plain EM iterations used to initialize.
    pub init_iters: usize,
}

impl BdConfig {
    pub fn new(b: usize, em: EmConfig) -> Self {
        BdConfig {
            b,
            epsilon: None,
            alpha0: None,
            alpha_factor: 2.0,
            c_heuristic: 0.01,
            inner_rel_tol: 1e-7,
            inner_max_iter: 150,
            block_tol: 1e-6,
            alpha_cap: 1e12,
            support_tol_scale: 1e-8,
            em,
            init_iters: 10,
        }
    }

    pub fn epsilon_value(&self) -> f64 {
        let cells: usize = self.em.k.iter().product();
        self.epsilon.unwrap_or(0.01 / cells as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.em.k.len() != 2 {
            return Err(Error::Contract(
                "block diagonal fitting is defined for exactly two views".into(),
            ));
        }
        let (k1, k2) = (self.em.k[0], self.em.k[1]);
        if self.b == 0 || self.b > k1.min(k2) {
            return Err(Error::Contract(format!(
                "target blocks {} outside 1..={}",
                self.b,
                k1.min(k2)
            )));
        }
        let eps = self.epsilon_value();
        if eps <= 0.0 || eps >= 1.0 / (k1 * k2) as f64 {
            return Err(Error::Contract(format!(
                "epsilon = {eps} outside (0, {})",
                1.0 / (k1 * k2) as f64
            )));
        }
        if self.alpha_factor <= 1.0 {
            return Err(Error::Contract("alpha_factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// Unique minimizer of `-a log(x + eps) + b x` over `x >= 0`:
/// `max(a/b - eps, 0)`.
pub fn positive_part_closed_form(a: f64, b: f64, epsilon: f64) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 || epsilon <= 0.0 {
        return Err(Error::Contract(
            "positive_part_closed_form needs strictly positive inputs".into(),
        ));
    }
    Ok((a / b - epsilon).max(0.0))
}

/// Result of the initial-alpha heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaGuess {
    Value(f64),
    /// Every coupling weight is zero: the current iterate already has the
    /// target block structure.
    AlreadyBlockDiagonal,
}

/// Median heuristic for the initial penalty weight:
/// `c * median(a / (eps * M(U, 1_B)))` over cells whose coupling weight is
/// genuinely positive.
///
/// Couplings are squared differences of basis rows, so round-off leaves
/// noise of order `(eps_mach * |U|)^2` where an exact zero is meant (e.g.
/// the constant basis column of a connected graph). Entries below a floor
/// derived from the basis scale are excluded; if nothing survives, the
/// iterate already has the target block structure.
pub fn alpha_heuristic(
    a: &Array2<f64>,
    basis: &geig::EigenBasis,
    epsilon: f64,
    c: f64,
) -> AlphaGuess {
    let w = vec![1.0; basis.k()];
    let coupling = block_diag::coupling_matrix(basis, &w);
    let u_scale = basis.u.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor = (1e-9 * u_scale).powi(2) * basis.k() as f64;
    let mut ratios: Vec<f64> = a
        .iter()
        .zip(coupling.iter())
        .filter(|&(_, &m)| m > floor)
        .map(|(&av, &m)| av / (epsilon * m))
        .collect();
    if ratios.is_empty() {
        return AlphaGuess::AlreadyBlockDiagonal;
    }
    ratios.sort_by(|x, y| x.total_cmp(y));
    let mid = ratios.len() / 2;
    let median = if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        0.5 * (ratios[mid - 1] + ratios[mid])
    };
    AlphaGuess::Value(c * median)
}

/// Outcome of one `D` subproblem solve.
#[derive(Debug, Clone)]
pub struct DStepResult {
    pub d: Array2<f64>,
    pub kkt: KktResiduals,
    pub eq_multipliers: Vec<f64>,
}

/// Solve the convex M-step for `D`: minimize
/// `-sum a log(eps + D) + alpha <D, M>` subject to `D >= 0` plus the
/// equality rows carried by `spec` (degree constraints and, when set, the
/// total-mass row). Warm-started from `d_current`.
pub fn d_step(
    a: &Array2<f64>,
    spec: &SubproblemSpec,
    epsilon: f64,
    d_current: &Array2<f64>,
    opts: &SolverOptions,
) -> Result<DStepResult> {
    let coeffs: Vec<f64> = a.iter().copied().collect();
    let objective = NegLogObjective {
        coeffs: &coeffs,
        epsilon,
    };
    let linear: Vec<f64> = spec.coupling.iter().map(|m| spec.alpha * m).collect();
    // Mass row first so joint pruning drops degree rows that collapse onto
    // it (exact at one block, near-exact when blocks balance).
    let mut eqs = Vec::new();
    if let Some(mass) = spec.simplex_rhs {
        eqs.push(crate::solver::EqRow {
            coeffs: vec![1.0; a.len()],
            rhs: mass,
        });
    }
    for c in &spec.eq_constraints {
        eqs.push(crate::solver::EqRow {
            coeffs: c.coeffs.iter().copied().collect(),
            rhs: c.rhs,
        });
    }
    // Conditioning-bounded pruning: rows below 1e-7 of the top singular
    // value make the Newton systems unsolvable in f64 and encode
    // constraints that are numerically inactive anyway.
    let eqs = crate::solver::prune_dependent_rows(&eqs, 1e-7);
    let x0: Vec<f64> = d_current.iter().map(|&v| v.max(1e-12)).collect();
    let solved = minimize_nonneg_eq(&objective, &linear, &eqs, &x0, opts);
    if solved.is_err() && std::env::var_os("MVMM_DUMP_DSTEP").is_some() {
        let dump = serde_json::json!({
            "a": coeffs,
            "shape": [a.nrows(), a.ncols()],
            "linear": linear,
            "epsilon": epsilon,
            "x0": x0,
            "eqs": eqs.iter().map(|e| (e.coeffs.clone(), e.rhs)).collect::<Vec<_>>(),
        });
        std::fs::write("/tmp/dstep_fail.json", dump.to_string()).ok();
    }
    let SolveOutcome {
        x,
        eq_multipliers,
        kkt,
        ..
    } = solved?;
    // Well-conditioned systems land far below 1e-8; nearly dependent degree
    // rows (eigenbasis close to the constant vector) can cap the attainable
    // stationarity around 1e-7..1e-6, still orders below the EM noise
    // floor. Hard-fail only on clear non-convergence; the oracle separately
    // enforces surrogate descent.
    if kkt.max() > 1e-3 {
        return Err(Error::NonConvergence(format!(
            "D subproblem KKT residual {:e}",
            kkt.max()
        )));
    }
    if kkt.max() > 1e-8 {
        log::debug!("D subproblem finished with loose KKT residual {:e}", kkt.max());
    }
    Ok(DStepResult {
        d: Array2::from_shape_vec(a.dim(), x).expect("shape preserved"),
        kkt,
        eq_multipliers,
    })
}

/// EM oracle for the alternating solver: `f(D)` is the negative observed
/// log-likelihood per observation at `pi = eps 1 1^T + D`, and the
/// subproblem solve performs one E-step, the per-view weighted MLE updates,
/// and the convex `D` step (an EM surrogate with matching first-order
/// behavior). The per-observation scale keeps `f` consistent with the `D`
/// subproblem, whose log coefficients are the averaged responsibilities.
struct BdEmOracle<'a> {
    data: &'a MultiViewData,
    views: Vec<ViewModel>,
    floors: Vec<Array1<f64>>,
    epsilon: f64,
    mass: f64,
    shape: Vec<usize>,
    solver_opts: SolverOptions,
    worst_kkt: f64,
    last_average: Option<Array2<f64>>,
}

impl BdEmOracle<'_> {
    fn model_at(&self, d: &Array2<f64>) -> Result<MvmmModel> {
        let pi = pi_from_d(d, self.epsilon)?;
        MvmmModel::new(self.views.clone(), pi)
    }
}

/// `pi = eps 1 1^T + D`, renormalized to exact total mass one.
pub fn pi_from_d(d: &Array2<f64>, epsilon: f64) -> Result<ProbTable> {
    ProbTable::from_unnormalized(d.mapv(|v| v + epsilon).into_dyn())
}

impl ObjectiveOracle for BdEmOracle<'_> {
    fn evaluate(&mut self, d: &Array2<f64>) -> f64 {
        let model = self.model_at(d).expect("valid model state");
        -log_likelihood(&model, self.data) / self.data.n().max(1) as f64
    }

    fn solve_subproblem(
        &mut self,
        spec: &SubproblemSpec,
        d_current: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let model = self.model_at(d_current)?;
        let resp = e_step(&model, self.data);
        for v in 0..self.data.num_views() {
            let weights = view_weights(&resp.gamma, &self.shape, v);
            let out =
                weighted_mle_update(self.data.view(v), &weights, &self.views[v], &self.floors[v]);
            self.views[v] = out.model;
        }
        let a = resp.average.as_matrix()?;
        self.last_average = Some(a.clone());
        let spec = spec.clone().with_simplex(self.mass);
        let result = d_step(&a, &spec, self.epsilon, d_current, &self.solver_opts)?;
        self.worst_kkt = self.worst_kkt.max(result.kkt.max());
        // Oracle contract: never hand back something worse than the current
        // iterate under the surrogate-plus-penalty objective.
        let surrogate = |d: &Array2<f64>| -> f64 {
            let fit: f64 = a
                .iter()
                .zip(d.iter())
                .map(|(av, dv)| -av * (self.epsilon + dv).ln())
                .sum();
            let pen: f64 = spec
                .coupling
                .iter()
                .zip(d.iter())
                .map(|(m, dv)| spec.alpha * m * dv)
                .sum();
            fit + pen
        };
        if surrogate(&result.d) > surrogate(d_current) + 1e-12 {
            log::debug!("D subproblem result regressed; keeping the current iterate");
            return Ok(d_current.clone());
        }
        Ok(result.d)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BdTrace {
    /// Inner-loop objectives of the extremal problem, one vector per outer
    /// round (nonincreasing within each round at fixed alpha).
    pub round_objectives: Vec<Vec<f64>>,
    /// Weighted eigenvalue sum of `D` at the end of each round.
    pub eigsum: Vec<f64>,
    pub alpha_history: Vec<f64>,
    pub converged: bool,
    pub rounds: usize,
    /// Worst KKT residual over all `D` subproblem solves.
    pub worst_kkt: f64,
}

#[derive(Debug, Clone)]
pub struct BdFit {
    /// Full model with `pi = eps 1 1^T + D`.
    pub model: MvmmModel,
    pub d: Array2<f64>,
    pub epsilon: f64,
    pub blocks: BlockStructure,
    pub trace: BdTrace,
}

/// Fit the block diagonally constrained MVMM.
///
/// Initialization runs a few plain EM iterations; `D0` is the excess of the
/// resulting `pi` over the dense floor. Each outer round runs the
/// alternating inner loop at fixed `alpha` and checks whether the smallest
/// `B` eigenvalues have vanished; if not, `alpha` is escalated.
pub fn fit_bd(data: &MultiViewData, config: &BdConfig) -> Result<BdFit> {
    config.validate()?;
    let epsilon = config.epsilon_value();
    let (k1, k2) = (config.em.k[0], config.em.k[1]);
    let mass = 1.0 - (k1 * k2) as f64 * epsilon;

    // A few unconstrained EM iterations to land in a sensible basin.
    let mut init_cfg = config.em.clone();
    init_cfg.max_iter = config.init_iters;
    let (init_model, _) = fit_em(data, &init_cfg)?;

    let pi0 = init_model.pi.as_matrix()?;
    let mut d = pi0.mapv(|v| (v - epsilon).max(0.0));
    let total = d.sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "initial pi carries no mass above the dense floor".into(),
        ));
    }
    d.mapv_inplace(|v| v * mass / total);

    let floors: Vec<Array1<f64>> = data
        .views()
        .iter()
        .map(|v| regularization_floor(v, config.em.reg_scale))
        .collect();
    let mut oracle = BdEmOracle {
        data,
        views: init_model.views,
        floors,
        epsilon,
        mass,
        shape: config.em.k.clone(),
        solver_opts: SolverOptions::default(),
        worst_kkt: 0.0,
        last_average: None,
    };

    let w = vec![1.0; config.b];
    let mut alpha = match config.alpha0 {
        Some(a0) => a0,
        None => {
            let basis = geig::smallest_generalized_eigenbasis(&d, config.b)?;
            let model0 = oracle.model_at(&d)?;
            let a0 = e_step(&model0, data).average.as_matrix()?;
            match alpha_heuristic(&a0, &basis, epsilon, config.c_heuristic) {
                AlphaGuess::Value(v) => v.max(f64::MIN_POSITIVE),
                // Coupling already vanished; any positive alpha works, the
                // eigenvalue gate below decides completion.
                AlphaGuess::AlreadyBlockDiagonal => 1.0,
            }
        }
    };

    let stop = StoppingRule {
        rel_tol: config.inner_rel_tol,
        max_iters: config.inner_max_iter,
    };
    let mut trace = BdTrace {
        round_objectives: Vec::new(),
        eigsum: Vec::new(),
        alpha_history: Vec::new(),
        converged: false,
        rounds: 0,
        worst_kkt: 0.0,
    };

    loop {
        let inner = block_diag::alternate(&mut oracle, &d, config.b, &w, alpha, &stop)?;
        d = inner.x;
        let eigsum = geig::weighted_eigsum(&d, &w)?;
        trace.round_objectives.push(inner.objective);
        trace.eigsum.push(eigsum);
        trace.alpha_history.push(alpha);
        trace.rounds += 1;
        log::debug!("bd round {}: alpha {:e} eigsum {:e}", trace.rounds, alpha, eigsum);
        if eigsum <= config.block_tol {
            trace.converged = true;
            break;
        }
        alpha *= config.alpha_factor;
        if alpha > config.alpha_cap {
            return Err(Error::BlocksUnattainable {
                target: config.b,
                alpha_cap: config.alpha_cap,
            });
        }
    }
    trace.worst_kkt = oracle.worst_kkt;

    let support_tol = config.support_tol_scale * d.iter().fold(0.0f64, |m, &v| m.max(v));
    let blocks = laplacian::count_blocks_matrix(&d, support_tol);
    let model = MvmmModel::new(oracle.views, pi_from_d(&d, epsilon)?)?;
    Ok(BdFit {
        model,
        d,
        epsilon,
        blocks,
        trace,
    })
}

/// Block-level hard labels: responsibilities are summed over each block's
/// `(k1, k2)` support cells and the argmax block is assigned.
pub fn predict_block_labels(
    model: &MvmmModel,
    blocks: &BlockStructure,
    data: &MultiViewData,
) -> Vec<usize> {
    let resp = e_step(model, data);
    let shape = model.pi.shape().to_vec();
    let (k1, k2) = (shape[0], shape[1]);
    let nb = blocks.num_blocks.max(1);
    // Cell -> block membership (both axes must agree).
    let mut cell_block = vec![None; k1 * k2];
    for i in 0..k1 {
        for j in 0..k2 {
            if let (Some(rb), Some(cb)) = (blocks.row_block()[i], blocks.col_block()[j]) {
                if rb == cb {
                    cell_block[i * k2 + j] = Some(rb);
                }
            }
        }
    }
    (0..data.n())
        .map(|i| {
            let mut scores = vec![0.0f64; nb];
            for (cell, blk) in cell_block.iter().enumerate() {
                if let Some(b) = blk {
                    scores[*b] += resp.gamma[[i, cell]];
                }
            }
            scores
                .iter()
                .enumerate()
                .max_by(|(_, x), (_, y)| x.total_cmp(y))
                .map(|(b, _)| b)
                .unwrap_or(0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution;

    #[test]
    fn positive_part_examples() {
        assert!((positive_part_closed_form(1.0, 2.0, 0.1).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(positive_part_closed_form(1.0, 20.0, 0.1).unwrap(), 0.0);
        assert!(positive_part_closed_form(0.0, 1.0, 0.1).is_err());
        assert!(positive_part_closed_form(1.0, -1.0, 0.1).is_err());
    }

    /// Golden-section search on [lo, hi] for a unimodal function.
    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn positive_part_matches_golden_section() {
        // Golden section resolves the argmin to about sqrt(machine eps)
        // around a flat minimum; the tolerance reflects that floor.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = 0.05 + rng.random::<f64>();
            let b = 0.3 + 3.0 * rng.random::<f64>();
            let eps = 0.01 + 0.3 * rng.random::<f64>();
            let want = positive_part_closed_form(a, b, eps).unwrap();
            let got = golden_min(|x| -a * (x + eps).ln() + b * x, 0.0, 10.0 * a / b);
            assert!(
                (got - want).abs() < 1e-7,
                "a={a} b={b} eps={eps}: {got} vs {want}"
            );
        }
    }

    /// Basis with constant row embedding `r` and column embedding `c`
    /// (single column), giving the constant coupling `(r - c)^2`.
    fn split_constant_basis(k1: usize, k2: usize, r: f64, c: f64) -> geig::EigenBasis {
        let mut u = Array2::zeros((k1 + k2, 1));
        for i in 0..k1 {
            u[[i, 0]] = r;
        }
        for j in 0..k2 {
            u[[k1 + j, 0]] = c;
        }
        geig::EigenBasis {
            u,
            eigenvalues: vec![0.0],
            attained_value: 0.0,
            rows: k1,
            cols: k2,
        }
    }

    #[test]
    fn alpha_heuristic_uniform_case_and_linearity() {
        let k1 = 3;
        let k2 = 4;
        let a = Array2::from_elem((k1, k2), 1.0 / (k1 * k2) as f64);
        // Coupling constant m = 0.7 from embeddings sqrt(0.7) vs 0.
        let basis = split_constant_basis(k1, k2, 0.7f64.sqrt(), 0.0);
        let eps = 0.01;
        let c = 0.02;
        let want = c / ((k1 * k2) as f64 * eps * 0.7);
        match alpha_heuristic(&a, &basis, eps, c) {
            AlphaGuess::Value(v) => assert!((v - want).abs() < 1e-12),
            _ => panic!("expected a value"),
        }
        // Doubling c doubles alpha.
        match (
            alpha_heuristic(&a, &basis, eps, c),
            alpha_heuristic(&a, &basis, eps, 2.0 * c),
        ) {
            (AlphaGuess::Value(v1), AlphaGuess::Value(v2)) => {
                assert!((v2 - 2.0 * v1).abs() < 1e-12)
            }
            _ => panic!(),
        }
        // Identical embeddings (connected graph, B = 1) flag completion.
        let flat = split_constant_basis(k1, k2, 0.31, 0.31);
        assert_eq!(
            alpha_heuristic(&a, &flat, eps, c),
            AlphaGuess::AlreadyBlockDiagonal
        );
    }

    #[test]
    fn alpha_heuristic_matches_sorting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = Array2::from_shape_fn((4, 5), |_| rng.random::<f64>());
            let u = Array2::from_shape_fn((9, 2), |_| rng.random::<f64>() - 0.5);
            let basis = geig::EigenBasis {
                u,
                eigenvalues: vec![0.0, 0.0],
                attained_value: 0.0,
                rows: 4,
                cols: 5,
            };
            let m = block_diag::coupling_matrix(&basis, &[1.0, 1.0]);
            let eps = 0.05;
            let mut ratios: Vec<f64> = Vec::new();
            for (av, mv) in a.iter().zip(m.iter()) {
                if *mv > 0.0 {
                    ratios.push(av / (eps * mv));
                }
            }
            ratios.sort_by(|x, y| x.total_cmp(y));
            let n = ratios.len();
            let want = if n % 2 == 1 {
                ratios[n / 2]
            } else {
                0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
            };
            match alpha_heuristic(&a, &basis, eps, 0.01) {
                AlphaGuess::Value(v) => assert!((v - 0.01 * want).abs() < 1e-12),
                _ => panic!(),
            }
        }
    }

    fn simplex_table(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        let mut a = Array2::from_shape_fn((r, c), |_| 0.05 + rng.random::<f64>());
        let total = a.sum();
        a.mapv_inplace(|v| v / total);
        a
    }

    #[test]
    fn d_step_mass_only_matches_stationarity() {
        // alpha = 0 with only the total-mass row: stationarity says
        // a / (eps + D) is constant; for tiny eps, D is proportional to a.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = simplex_table(&mut rng, 3, 4);
        let eps = 1e-9;
        let mass = 1.0 - 12.0 * eps;
        let spec = SubproblemSpec {
            coupling: Array2::zeros((3, 4)),
            alpha: 0.0,
            eq_constraints: Vec::new(),
            simplex_rhs: Some(mass),
            pruned: Vec::new(),
        };
        let d0 = Array2::from_elem((3, 4), mass / 12.0);
        let out = d_step(&a, &spec, eps, &d0, &SolverOptions::default()).unwrap();
        assert!(out.kkt.max() < 1e-8, "kkt {:?}", out.kkt);
        let ratios: Vec<f64> = a.iter().zip(out.d.iter()).map(|(av, dv)| av / (eps + dv)).collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(hi / lo - 1.0 < 1e-6, "stationarity ratio spread {}", hi / lo - 1.0);
        for (dv, av) in out.d.iter().zip(a.iter()) {
            assert!((dv - mass * av).abs() < 1e-5, "{dv} vs {}", mass * av);
        }
    }

    #[test]
    fn d_step_unconstrained_matches_entrywise_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let a = simplex_table(&mut rng, 3, 3);
            let m = Array2::from_shape_fn((3, 3), |_| 0.1 + rng.random::<f64>());
            let alpha = 0.5 + 5.0 * rng.random::<f64>();
            let eps = 0.002 + 0.01 * rng.random::<f64>();
            let spec = SubproblemSpec {
                coupling: m.clone(),
                alpha,
                eq_constraints: Vec::new(),
                simplex_rhs: None,
                pruned: Vec::new(),
            };
            let d0 = Array2::from_elem((3, 3), 0.1);
            let out = d_step(&a, &spec, eps, &d0, &SolverOptions::default()).unwrap();
            for ((dv, av), mv) in out.d.iter().zip(a.iter()).zip(m.iter()) {
                let want = positive_part_closed_form(*av, alpha * mv, eps).unwrap();
                assert!(
                    (dv - want).abs() < 1e-6,
                    "trial {trial}: {dv} vs {want}"
                );
            }
        }
    }

    #[test]
    fn d_step_preserves_two_block_support() {
        // Averages supported on an exact 2-block pattern with matching
        // indicator basis: the solution keeps mass inside the blocks.
        let mut a = Array2::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                a[[i, j]] = 0.15;
                a[[i + 2, j + 2]] = 0.10;
            }
        }
        let eps = 1e-4;
        let mass = 1.0 - 16.0 * eps;
        let d0 = a.mapv(|v| v * mass);
        let basis = geig::smallest_generalized_eigenbasis(&d0, 2).unwrap();
        let rows = block_diag::constraint_rows(&basis);
        let spec = SubproblemSpec {
            coupling: block_diag::coupling_matrix(&basis, &[1.0, 1.0]),
            alpha: 5.0,
            eq_constraints: rows.constraints,
            simplex_rhs: Some(mass),
            pruned: rows.pruned,
        };
        let out = d_step(&a, &spec, eps, &d0, &SolverOptions::default()).unwrap();
        let max = out.d.iter().fold(0.0f64, |m, &v| m.max(v));
        for i in 0..4 {
            for j in 0..4 {
                let in_block = (i < 2) == (j < 2);
                if in_block {
                    assert!(out.d[[i, j]] > 1e-3 * max);
                } else {
                    assert!(out.d[[i, j]] < 1e-6 * max, "cross entry {}", out.d[[i, j]]);
                }
            }
        }
    }

    fn beads_data(
        seed: u64,
        n: usize,
        k: usize,
        blocks: usize,
        sep: f64,
    ) -> (MultiViewData, Vec<usize>, Vec<usize>) {
        // `blocks` equal 2x2-style blocks on a k x k table (k divisible).
        // Evenly spaced means keep this small-scale test well separated.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let per = k / blocks;
        let mut means1 = Vec::new();
        let mut means2 = Vec::new();
        for q in 0..k {
            means1.push(sep * q as f64);
            means2.push(-0.5 * sep * q as f64);
        }
        let mut v1 = Array2::zeros((n, 1));
        let mut v2 = Array2::zeros((n, 1));
        let mut tuple_labels = Vec::new();
        let mut block_labels = Vec::new();
        for i in 0..n {
            let blk = i % blocks;
            let k1 = blk * per + (i / blocks) % per;
            let k2 = blk * per + (i / (blocks * per)) % per;
            tuple_labels.push(k1 * k + k2);
            block_labels.push(blk);
            v1[[i, 0]] = means1[k1] + normal.sample(&mut rng);
            v2[[i, 0]] = means2[k2] + normal.sample(&mut rng);
        }
        (
            MultiViewData::new(vec![v1, v2]).unwrap(),
            tuple_labels,
            block_labels,
        )
    }

    #[test]
    fn fit_bd_b1_runs_and_allows_dense_pi() {
        let (data, _, _) = beads_data(5, 150, 2, 1, 4.0);
        let mut em = EmConfig::new(vec![2, 2], 3);
        em.n_init = 2;
        let cfg = BdConfig::new(1, em);
        let fit = fit_bd(&data, &cfg).unwrap();
        assert!(fit.trace.converged);
        assert!(fit.blocks.num_blocks >= 1);
        // pi is a valid table with the dense floor everywhere.
        assert!(fit.model.pi.flat().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn fit_bd_recovers_two_blocks_small_scale() {
        let mut successes = 0;
        for seed in 0..3 {
            let (data, _, block_truth) = beads_data(40 + seed, 400, 4, 2, 6.0);
            let mut em = EmConfig::new(vec![4, 4], seed);
            em.n_init = 3;
            let cfg = BdConfig::new(2, em);
            let fit = fit_bd(&data, &cfg).unwrap();
            assert!(fit.trace.converged);
            assert_eq!(fit.trace.eigsum.last().map(|e| *e <= 1e-6), Some(true));
            // On success the spectral count (at the block tolerance) and the
            // union-find count both certify at least B blocks.
            let spectrum = crate::laplacian::spectrum_report(&fit.d);
            let zc = spectrum.sym.iter().filter(|&&v| v <= cfg.block_tol).count();
            assert!(zc >= 2, "only {zc} near-zero eigenvalues");
            assert!(fit.blocks.num_blocks >= 2);
            let labels = predict_block_labels(&fit.model, &fit.blocks, &data);
            let ari = crate::select::ari(&labels, &block_truth).unwrap();
            if fit.blocks.num_blocks == 2 && ari > 0.9 {
                successes += 1;
            }
        }
        assert!(successes >= 2, "2-block recovery in {successes}/3 seeds");
    }

    #[test]
    fn inner_loop_objective_monotone() {
        let (data, _, _) = beads_data(9, 250, 4, 2, 5.0);
        let mut em = EmConfig::new(vec![4, 4], 1);
        em.n_init = 2;
        let cfg = BdConfig::new(2, em);
        let fit = fit_bd(&data, &cfg).unwrap();
        for round in &fit.trace.round_objectives {
            for w in round.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-6 * (w[0].abs() + 1.0),
                    "inner ascent {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
        // pi stays on the simplex throughout (final state check).
        let total: f64 = fit.model.pi.flat().iter().sum();
        assert!((total - 1.0).abs() < 1e-8);
        let mass: f64 = fit.d.sum();
        let want = 1.0 - 16.0 * fit.epsilon;
        assert!((mass - want).abs() < 1e-6);
        assert!(fit.trace.worst_kkt < 1e-7);
    }

    #[test]
    fn predict_block_labels_cases() {
        let (data, _, _) = beads_data(11, 60, 2, 1, 3.0);
        let mut em = EmConfig::new(vec![2, 2], 2);
        em.n_init = 1;
        let cfg = BdConfig::new(1, em);
        let fit = fit_bd(&data, &cfg).unwrap();
        // Single block: every observation labeled 0.
        if fit.blocks.num_blocks == 1 {
            let labels = predict_block_labels(&fit.model, &fit.blocks, &data);
            assert!(labels.iter().all(|&l| l == 0));
        }
        // Labels match a brute-force sum/argmax on the responsibilities.
        let labels = predict_block_labels(&fit.model, &fit.blocks, &data);
        let resp = e_step(&fit.model, &data);
        let k2 = 2;
        for i in 0..data.n() {
            let mut best = (0usize, f64::NEG_INFINITY);
            for b in 0..fit.blocks.num_blocks {
                let mut acc = 0.0;
                for k1 in 0..2 {
                    for kk2 in 0..k2 {
                        if fit.blocks.row_block()[k1] == Some(b)
                            && fit.blocks.col_block()[kk2] == Some(b)
                        {
                            acc += resp.gamma[[i, k1 * k2 + kk2]];
                        }
                    }
                }
                if acc > best.1 {
                    best = (b, acc);
                }
            }
            assert_eq!(labels[i], best.0);
        }
    }

    #[test]
    fn config_validation() {
        let em = EmConfig::new(vec![3, 3], 0);
        assert!(BdConfig::new(4, em.clone()).validate().is_err());
        let mut cfg = BdConfig::new(2, em.clone());
        cfg.epsilon = Some(0.2);
        assert!(cfg.validate().is_err());
        let em3 = EmConfig::new(vec![3, 3, 3], 0);
        assert!(BdConfig::new(2, em3).validate().is_err());
        let _ = array![[0.0]];
    }
}
