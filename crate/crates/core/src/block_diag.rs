//! Alternating solver for block diagonal regularization of a nonnegative
//! matrix: minimize `f(X) + alpha * sum_j w_j lambda_(j)(L_sym(A_bp(X)))`
//! over `X >= 0` through its extremal reformulation in `(X, U)`.
//!
//! The eigen step is solved exactly by [`geig::smallest_generalized_eigenbasis`].
//! For fixed `U` the penalty becomes a weighted lasso `alpha * <X, M(U, w)>`
//! and the orthogonality constraint `U^T diag(deg) U = I` becomes linear in
//! `X`; the `X` step is delegated to a pluggable [`ObjectiveOracle`] (a full
//! minimizer or an EM-style surrogate minimizer). Each full alternation
//! cannot increase the objective as long as the oracle honors its contract.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geig::{self, EigenBasis};
use crate::solver::EqRow;

/// One linear equality constraint `<coeffs, X> = rhs` on the matrix variable.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Array2<f64>,
    pub rhs: f64,
}

/// Linearized subproblem data handed to the oracle: minimize
/// `f(X) + alpha * <X, coupling>` subject to `X >= 0`, the degree
/// constraints in `eq_constraints`, and optionally a total-mass constraint.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub coupling: Array2<f64>,
    pub alpha: f64,
    pub eq_constraints: Vec<LinearConstraint>,
    /// `Some(rhs)` adds the constraint `<X, 1 1^T> = rhs`.
    pub simplex_rhs: Option<f64>,
    /// Indices (into the unpruned `[diag rows; utri rows]` stack) that were
    /// dropped as linearly dependent.
    pub pruned: Vec<usize>,
}

impl SubproblemSpec {
    pub fn with_simplex(mut self, rhs: f64) -> Self {
        self.simplex_rhs = Some(rhs);
        self
    }

    /// Flatten all equality constraints (including the mass row) for the
    /// vectorized solver. Row-major flattening, matching `Array2::iter`.
    pub fn eq_rows(&self) -> Vec<EqRow> {
        let mut rows: Vec<EqRow> = self
            .eq_constraints
            .iter()
            .map(|c| EqRow {
                coeffs: c.coeffs.iter().copied().collect(),
                rhs: c.rhs,
            })
            .collect();
        if let Some(mass) = self.simplex_rhs {
            let n = self.coupling.len();
            rows.push(EqRow {
                coeffs: vec![1.0; n],
                rhs: mass,
            });
        }
        rows
    }
}

/// Objective hook for the `X` subproblem.
///
/// `solve_subproblem` must return a feasible point that does not increase
/// `evaluate(X) + alpha * <X, coupling>` relative to `x_current` (either the
/// exact minimizer or the minimizer of a surrogate with matching first-order
/// behavior at `x_current`).
pub trait ObjectiveOracle {
    fn evaluate(&mut self, x: &Array2<f64>) -> f64;
    fn solve_subproblem(
        &mut self,
        spec: &SubproblemSpec,
        x_current: &Array2<f64>,
    ) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct StoppingRule {
    /// Relative objective-change tolerance.
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            rel_tol: 1e-8,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlternateTrace {
    /// Penalized objective `f(X) + alpha * sum w_j lambda_(j)` after each
    /// alternation (first entry is the initial point).
    pub objective: Vec<f64>,
    /// Weighted eigenvalue sum at each recorded objective.
    pub eigsum: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub x: Array2<f64>,
    pub basis: EigenBasis,
}

/// Coupling weights `M(U, w)`: `M_rc = ||diag(w)^{1/2} (U_row(r,:) - U_col(c,:))||^2`.
///
/// With `U` the degree-normalized indicators of `B` blocks and uniform
/// weights, `M_rc` is zero inside a block and `1/d_row(r) + 1/d_col(c)`
/// across blocks, so the induced lasso only penalizes between-block entries.
pub fn coupling_matrix(basis: &EigenBasis, w: &[f64]) -> Array2<f64> {
    let rows = basis.row_embedding();
    let cols = basis.col_embedding();
    let k = basis.k();
    assert_eq!(w.len(), k, "one weight per basis column");
    Array2::from_shape_fn((basis.rows, basis.cols), |(r, c)| {
        (0..k)
            .map(|j| {
                let d = rows[[r, j]] - cols[[c, j]];
                w[j] * d * d
            })
            .sum()
    })
}

/// Degree-constraint rows derived from an eigenbasis.
#[derive(Debug, Clone)]
pub struct ConstraintRows {
    /// `U ⊙ U`, one column per basis vector (diagonal constraints, rhs 1).
    pub c_diag: Array2<f64>,
    /// Columns `U_l ⊙ U_j` for `l < j` (off-diagonal constraints, rhs 0).
    pub c_utri: Array2<f64>,
    /// Pruned constraints after dropping dependent rows.
    pub constraints: Vec<LinearConstraint>,
    /// Dropped indices into the `[diag; utri]` stack.
    pub pruned: Vec<usize>,
}

/// Build the linear rows expressing `U^T diag(deg(A_bp(X))) U = I_K` in `X`
/// and prune linearly dependent ones.
///
/// Each vertex-weight column `c` turns into the coefficient table
/// `G[r, c'] = c[r] + c[R + c']` because a matrix entry contributes to the
/// degrees of both its row and its column vertex. Dependent rows (singular
/// values below `1e-10` times the largest of the stacked system) are removed
/// in order, keeping the diagonal rows first.
pub fn constraint_rows(basis: &EigenBasis) -> ConstraintRows {
    let (r, c, k) = (basis.rows, basis.cols, basis.k());
    let n = r + c;
    let mut c_diag = Array2::zeros((n, k));
    for j in 0..k {
        for i in 0..n {
            c_diag[[i, j]] = basis.u[[i, j]] * basis.u[[i, j]];
        }
    }
    let npairs = k * (k - 1) / 2;
    let mut c_utri = Array2::zeros((n, npairs));
    let mut pair = 0;
    for l in 0..k {
        for j in (l + 1)..k {
            for i in 0..n {
                c_utri[[i, pair]] = basis.u[[i, l]] * basis.u[[i, j]];
            }
            pair += 1;
        }
    }

    // Coefficient tables and right-hand sides of the stacked system.
    let table = |col: ndarray::ArrayView1<f64>| {
        Array2::from_shape_fn((r, c), |(i, j)| col[i] + col[r + j])
    };
    let mut full: Vec<LinearConstraint> = Vec::with_capacity(k + npairs);
    for j in 0..k {
        full.push(LinearConstraint {
            coeffs: table(c_diag.column(j)),
            rhs: 1.0,
        });
    }
    for p in 0..npairs {
        full.push(LinearConstraint {
            coeffs: table(c_utri.column(p)),
            rhs: 0.0,
        });
    }

    let (kept, pruned) = prune_dependent(&full);
    let constraints = kept.into_iter().map(|i| full[i].clone()).collect();
    ConstraintRows {
        c_diag,
        c_utri,
        constraints,
        pruned,
    }
}

/// Rank-revealing selection over vectorized coefficient tables; returns
/// `(kept, pruned)` index lists.
fn prune_dependent(rows: &[LinearConstraint]) -> (Vec<usize>, Vec<usize>) {
    let flat: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.coeffs.iter().copied().collect())
        .collect();
    let kept = crate::solver::select_independent_rows(&flat, 1e-10);
    let pruned = (0..rows.len()).filter(|i| !kept.contains(i)).collect();
    (kept, pruned)
}

fn live_rows_cols(x: &Array2<f64>, floor: f64) -> usize {
    let rows = x
        .rows()
        .into_iter()
        .filter(|row| row.sum() > floor)
        .count();
    let cols = x
        .columns()
        .into_iter()
        .filter(|col| col.sum() > floor)
        .count();
    rows + cols
}

/// Alternate eigen steps and oracle `X` steps on
/// `f(X) + alpha * sum_j w_j lambda_(j)(L_sym(A_bp(X)))`, `X >= 0`.
///
/// With `alpha = 0` the penalty is inert and a single unconstrained oracle
/// solve is performed. Iterates must keep at least `k` non-zero rows plus
/// columns (degree floor `1e-12`); dropping below makes the eigen step ill
/// posed and is reported as an error.
pub fn alternate(
    oracle: &mut dyn ObjectiveOracle,
    x0: &Array2<f64>,
    k: usize,
    w: &[f64],
    alpha: f64,
    stop: &StoppingRule,
) -> Result<AlternateTrace> {
    if alpha < 0.0 {
        return Err(Error::Contract("alpha must be nonnegative".into()));
    }
    if w.len() != k {
        return Err(Error::Contract("need exactly k weights".into()));
    }
    if x0.iter().any(|&v| v < 0.0) {
        return Err(Error::Contract("x0 must be nonnegative".into()));
    }
    const DEGREE_FLOOR: f64 = 1e-12;
    let live = live_rows_cols(x0, DEGREE_FLOOR);
    if live < k {
        return Err(Error::DegenerateIterate {
            needed: k,
            found: live,
        });
    }

    if alpha == 0.0 {
        // Unpenalized problem: one oracle solve, eigen step only evaluated
        // for the trace.
        let spec = SubproblemSpec {
            coupling: Array2::zeros(x0.dim()),
            alpha: 0.0,
            eq_constraints: Vec::new(),
            simplex_rhs: None,
            pruned: Vec::new(),
        };
        let before = oracle.evaluate(x0);
        let x = oracle.solve_subproblem(&spec, x0)?;
        let basis = geig::smallest_generalized_eigenbasis(&x, k)?;
        let after = oracle.evaluate(&x);
        return Ok(AlternateTrace {
            objective: vec![before, after],
            eigsum: vec![f64::NAN, basis.weighted_value(w)],
            iterations: 1,
            converged: true,
            x,
            basis,
        });
    }

    let mut x = x0.clone();
    let mut objective: Vec<f64> = Vec::new();
    let mut eigsums = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut basis = geig::smallest_generalized_eigenbasis(&x, k)?;

    loop {
        let eigsum = basis.weighted_value(w);
        let obj = oracle.evaluate(&x) + alpha * eigsum;
        if let Some(&prev) = objective.last() {
            if prev + 1e-9 < obj {
                log::warn!(
                    "alternating objective increased by {:e} at iteration {iterations}",
                    obj - prev
                );
            }
            if (prev - obj).abs() <= stop.rel_tol * (1.0 + prev.abs()) {
                objective.push(obj);
                eigsums.push(eigsum);
                converged = true;
                break;
            }
        }
        objective.push(obj);
        eigsums.push(eigsum);
        if iterations >= stop.max_iters {
            break;
        }
        iterations += 1;

        let rows = constraint_rows(&basis);
        let spec = SubproblemSpec {
            coupling: coupling_matrix(&basis, w),
            alpha,
            eq_constraints: rows.constraints,
            simplex_rhs: None,
            pruned: rows.pruned,
        };
        let x_next = oracle.solve_subproblem(&spec, &x)?;
        if x_next.iter().any(|&v| v < -1e-12) {
            return Err(Error::Contract(
                "oracle returned an infeasible (negative) iterate".into(),
            ));
        }
        let live = live_rows_cols(&x_next, DEGREE_FLOOR);
        if live < k {
            return Err(Error::DegenerateIterate {
                needed: k,
                found: live,
            });
        }
        x = x_next.mapv(|v| v.max(0.0));
        basis = geig::smallest_generalized_eigenbasis(&x, k)?;
    }

    Ok(AlternateTrace {
        objective,
        eigsum: eigsums,
        iterations,
        converged,
        x,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::count_blocks_matrix;
    use crate::solver::{QuadraticObjective, SolverOptions, minimize_nonneg_eq};
    use ndarray::array;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Test-only oracle: `f(X) = ||X - A||_F^2`, solved exactly under the
    /// spec's constraints with the barrier solver.
    struct NearestMatrixOracle {
        target: Array2<f64>,
    }

    impl ObjectiveOracle for NearestMatrixOracle {
        fn evaluate(&mut self, x: &Array2<f64>) -> f64 {
            x.iter()
                .zip(self.target.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        }

        fn solve_subproblem(
            &mut self,
            spec: &SubproblemSpec,
            x_current: &Array2<f64>,
        ) -> Result<Array2<f64>> {
            let flat_target: Vec<f64> = self.target.iter().copied().collect();
            let obj = QuadraticObjective {
                target: &flat_target,
            };
            let linear: Vec<f64> = spec.coupling.iter().map(|m| spec.alpha * m).collect();
            let x0: Vec<f64> = x_current.iter().copied().collect();
            let out = minimize_nonneg_eq(
                &obj,
                &linear,
                &spec.eq_rows(),
                &x0,
                &SolverOptions::default(),
            )?;
            Ok(Array2::from_shape_vec(x_current.dim(), out.x).expect("shape preserved"))
        }
    }

    fn block_indicator_basis(
        row_groups: &[Vec<usize>],
        col_groups: &[Vec<usize>],
        x: &Array2<f64>,
    ) -> EigenBasis {
        let (r, c) = x.dim();
        let deg = crate::laplacian::degrees(&crate::laplacian::bipartite_adjacency(x));
        let b = row_groups.len();
        let mut u = Array2::zeros((r + c, b));
        for (g, (rows, cols)) in row_groups.iter().zip(col_groups).enumerate() {
            let total: f64 = rows.iter().map(|&i| deg[i]).sum::<f64>()
                + cols.iter().map(|&j| deg[r + j]).sum::<f64>();
            for &i in rows {
                u[[i, g]] = 1.0 / total.sqrt();
            }
            for &j in cols {
                u[[r + j, g]] = 1.0 / total.sqrt();
            }
        }
        EigenBasis {
            u,
            eigenvalues: vec![0.0; b],
            attained_value: 0.0,
            rows: r,
            cols: c,
        }
    }

    #[test]
    fn coupling_zero_within_blocks() {
        // Two 2x2 blocks of ones.
        let mut x = Array2::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                x[[i, j]] = 1.0;
                x[[i + 2, j + 2]] = 1.0;
            }
        }
        let basis = block_indicator_basis(
            &[vec![0, 1], vec![2, 3]],
            &[vec![0, 1], vec![2, 3]],
            &x,
        );
        let m = coupling_matrix(&basis, &[1.0, 1.0]);
        let deg = crate::laplacian::degrees(&crate::laplacian::bipartite_adjacency(&x));
        for r in 0..4 {
            for c in 0..4 {
                let same = (r < 2) == (c < 2);
                if same {
                    assert!(m[[r, c]].abs() < 1e-12);
                } else {
                    // Total degree of each block is 8.
                    let d_row: f64 = if r < 2 {
                        deg[0] + deg[1] + deg[4] + deg[5]
                    } else {
                        deg[2] + deg[3] + deg[6] + deg[7]
                    };
                    let want = 1.0 / d_row + 1.0 / d_row;
                    assert!((m[[r, c]] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn coupling_zero_for_identical_embeddings() {
        let u = Array2::from_elem((5, 2), 0.3);
        let basis = EigenBasis {
            u,
            eigenvalues: vec![0.0, 0.0],
            attained_value: 0.0,
            rows: 2,
            cols: 3,
        };
        let m = coupling_matrix(&basis, &[1.0, 0.5]);
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupling_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = 4;
        let c = 3;
        let k = 3;
        let u = Array2::from_shape_fn((r + c, k), |_| rng.random::<f64>() - 0.5);
        let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        let basis = EigenBasis {
            u: u.clone(),
            eigenvalues: vec![0.0; k],
            attained_value: 0.0,
            rows: r,
            cols: c,
        };
        let m = coupling_matrix(&basis, &w);
        for i in 0..r {
            for j in 0..c {
                let mut want = 0.0;
                for l in 0..k {
                    let d = u[[i, l]] - u[[r + j, l]];
                    want += w[l] * d * d;
                }
                assert!((m[[i, j]] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn constraint_rows_k1_has_no_pairs() {
        let x = Array2::ones((3, 2));
        let basis = crate::geig::smallest_generalized_eigenbasis(&x, 1).unwrap();
        let rows = constraint_rows(&basis);
        assert_eq!(rows.c_utri.ncols(), 0);
        assert_eq!(rows.constraints.len(), 1);
        // The single diagonal row evaluates to 1 at the current degrees.
        let val: f64 = rows.constraints[0]
            .coeffs
            .iter()
            .zip(x.iter())
            .map(|(g, xv)| g * xv)
            .sum();
        assert!((val - 1.0).abs() < 1e-10);
    }

    #[test]
    fn disjoint_block_cross_term_pruned() {
        let mut x = Array2::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                x[[i, j]] = 1.0;
                x[[i + 2, j + 2]] = 1.0;
            }
        }
        let basis = block_indicator_basis(
            &[vec![0, 1], vec![2, 3]],
            &[vec![0, 1], vec![2, 3]],
            &x,
        );
        let rows = constraint_rows(&basis);
        // The single utri cross term (index 2 in the stack) is identically
        // zero for disjoint indicators and must be pruned.
        assert_eq!(rows.pruned, vec![2]);
        assert_eq!(rows.constraints.len(), 2);
    }

    #[test]
    fn constraint_rows_reconstruct_gram_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((5, 4), |_| 0.05 + rng.random::<f64>());
        let basis = crate::geig::smallest_generalized_eigenbasis(&x, 3).unwrap();
        let rows = constraint_rows(&basis);
        let deg = crate::laplacian::degrees(&crate::laplacian::bipartite_adjacency(&x));
        // Brute-force U^T diag(deg) U from the raw c_diag / c_utri columns.
        let k = 3;
        let mut pair = 0;
        for l in 0..k {
            let diag: f64 = (0..9).map(|i| rows.c_diag[[i, l]] * deg[i]).sum();
            assert!((diag - 1.0).abs() < 1e-12);
            for j in (l + 1)..k {
                let off: f64 = (0..9).map(|i| rows.c_utri[[i, pair]] * deg[i]).sum();
                assert!(off.abs() < 1e-12);
                pair += 1;
            }
        }
        assert_eq!(rows.constraints.len() + rows.pruned.len(), 6);
    }

    #[test]
    fn degree_scaling_consistency() {
        // Scaling X by t rescales degrees by t; rescaling U by t^{-1/2}
        // keeps U^T diag(deg) U = I and scales the coupling by 1/t.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = Array2::from_shape_fn((4, 5), |_| 0.1 + rng.random::<f64>());
        let t = 3.7;
        let basis = crate::geig::smallest_generalized_eigenbasis(&x, 2).unwrap();
        let scaled = crate::geig::smallest_generalized_eigenbasis(&x.mapv(|v| t * v), 2).unwrap();
        // Same eigenvalues (tsym is scale invariant).
        for (a, b) in basis.eigenvalues.iter().zip(scaled.eigenvalues.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let m1 = coupling_matrix(&basis, &[1.0, 1.0]);
        let m2 = coupling_matrix(&scaled, &[1.0, 1.0]);
        for (a, b) in m1.iter().zip(m2.iter()) {
            assert!((a / t - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    /// Exhaustive best objective over all 2-block support patterns of a
    /// 4x4 target: assign rows and columns to two nonempty groups; the best
    /// feasible X on that support copies the target there, paying the
    /// squared mass of the off-support entries.
    fn exhaustive_two_block_cost(a: &Array2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for rmask in 1..15u32 {
            for cmask in 1..15u32 {
                let mut cost = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        let same = (rmask >> i & 1) == (cmask >> j & 1);
                        if !same {
                            cost += a[[i, j] ] * a[[i, j]];
                        }
                    }
                }
                best = best.min(cost);
            }
        }
        best
    }

    #[test]
    fn alternate_recovers_two_blocks_on_noisy_target() {
        // Two 2x2 blocks of ones plus a small dense floor.
        let eps = 0.05;
        let mut a = Array2::from_elem((4, 4), eps);
        for i in 0..2 {
            for j in 0..2 {
                a[[i, j]] = 1.0;
                a[[i + 2, j + 2]] = 1.0;
            }
        }
        let mut oracle = NearestMatrixOracle { target: a.clone() };
        let x0 = a.clone();
        let trace = alternate(
            &mut oracle,
            &x0,
            2,
            &[1.0, 1.0],
            50.0,
            &StoppingRule::default(),
        )
        .unwrap();
        assert!(trace.converged);
        // Monotone descent.
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "ascent: {} -> {}", w[0], w[1]);
        }
        // The limit is 2-block diagonal and its split of rows/columns is an
        // exhaustive-search optimal 2-block support pattern for the target.
        let tol = crate::laplacian::default_support_tol(&trace.x.view().into_dyn());
        let blocks = count_blocks_matrix(&trace.x, tol);
        assert_eq!(blocks.num_blocks, 2);
        let mut found_cost = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if blocks.row_block()[i] != blocks.col_block()[j] {
                    found_cost += a[[i, j]] * a[[i, j]];
                }
            }
        }
        let best = exhaustive_two_block_cost(&a);
        assert!(
            (found_cost - best).abs() < 1e-12,
            "support cost {found_cost} vs exhaustive {best}"
        );
    }

    #[test]
    fn block_diagonal_target_is_fixed_point() {
        let mut a = Array2::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                a[[i, j]] = 0.5 + 0.1 * (i + j) as f64;
                a[[i + 2, j + 2]] = 0.7;
            }
        }
        let mut oracle = NearestMatrixOracle { target: a.clone() };
        let trace = alternate(
            &mut oracle,
            &a,
            2,
            &[1.0, 1.0],
            10.0,
            &StoppingRule::default(),
        )
        .unwrap();
        for (got, want) in trace.x.iter().zip(a.iter()) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn alpha_zero_is_single_unpenalized_solve() {
        let a = array![[0.3, 0.1], [0.2, 0.9]];
        let mut oracle = NearestMatrixOracle { target: a.clone() };
        let x0 = Array2::from_elem((2, 2), 0.5);
        let trace = alternate(
            &mut oracle,
            &x0,
            1,
            &[1.0],
            0.0,
            &StoppingRule::default(),
        )
        .unwrap();
        assert_eq!(trace.iterations, 1);
        for (got, want) in trace.x.iter().zip(a.iter()) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_point_consistency_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = Array2::from_shape_fn((4, 4), |_| rng.random::<f64>());
        let stop = StoppingRule::default();
        let mut oracle = NearestMatrixOracle { target: a.clone() };
        let trace = alternate(&mut oracle, &a, 2, &[1.0, 1.0], 2.0, &stop).unwrap();
        assert!(trace.converged);
        // One more full alternation moves the objective by less than the
        // stopping tolerance.
        let mut oracle2 = NearestMatrixOracle { target: a.clone() };
        let again = alternate(
            &mut oracle2,
            &trace.x,
            2,
            &[1.0, 1.0],
            2.0,
            &StoppingRule {
                rel_tol: 0.0,
                max_iters: 1,
            },
        )
        .unwrap();
        let before = again.objective[0];
        let after = *again.objective.last().unwrap();
        assert!((before - after).abs() <= stop.rel_tol * (1.0 + before.abs()) * 10.0);
    }

    #[test]
    fn small_eigsum_certifies_block_count() {
        // When the returned X has eigsum below tolerance, union-find agrees
        // that there are at least B blocks.
        let eps = 0.02;
        let mut a = Array2::from_elem((4, 4), eps);
        for i in 0..2 {
            for j in 0..2 {
                a[[i, j]] = 1.0;
                a[[i + 2, j + 2]] = 1.0;
            }
        }
        let mut oracle = NearestMatrixOracle { target: a.clone() };
        let trace = alternate(
            &mut oracle,
            &a,
            2,
            &[1.0, 1.0],
            100.0,
            &StoppingRule::default(),
        )
        .unwrap();
        let eigsum = crate::geig::weighted_eigsum(&trace.x, &[1.0, 1.0]).unwrap();
        assert!(eigsum <= 1e-8, "eigsum {eigsum}");
        let tol = crate::laplacian::default_support_tol(&trace.x.view().into_dyn());
        assert!(count_blocks_matrix(&trace.x, tol).num_blocks >= 2);
    }
}
