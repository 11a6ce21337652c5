//! Generalized eigen machinery for the bipartite-graph Laplacian pair.
//!
//! The alternating block-diagonal solver repeatedly needs the smallest `K`
//! generalized eigenvectors of `(L_un(A_bp(X)), diag(deg(A_bp(X))))`. These
//! are never computed from the `(R+C) x (R+C)` pair directly: the spectrum
//! of the symmetric Laplacian pairs as `1 ± sigma` around 1, where `sigma`
//! are the singular values of the smaller `R x C` matrix `tsym(X)`, so a
//! thin SVD is enough. Zero rows/columns are handled by solving the reduced
//! problem and padding zero rows back in.
//!
//! [`generalized_eigenvalues`] is the independent dense route used to
//! cross-check the SVD construction in tests.

use ndarray::{Array1, Array2, ArrayView2, s};

use crate::error::{Error, Result};
use crate::laplacian::{bipartite_adjacency, degrees, tsym};
use crate::linalg;

/// Basis attaining the minimum of `Tr(U^T L_un U diag(w))` over
/// `U^T diag(deg) U = I_K`, columns ordered by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    /// `(R + C) x K`; the first `R` rows embed rows of `X`, the rest columns.
    pub u: Array2<f64>,
    /// The `K` smallest generalized eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Objective value at uniform weights: sum of `eigenvalues`.
    pub attained_value: f64,
    pub rows: usize,
    pub cols: usize,
}

impl EigenBasis {
    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    /// Embedding rows for the row vertices of `X`.
    pub fn row_embedding(&self) -> ArrayView2<'_, f64> {
        self.u.slice(s![..self.rows, ..])
    }

    /// Embedding rows for the column vertices of `X`.
    pub fn col_embedding(&self) -> ArrayView2<'_, f64> {
        self.u.slice(s![self.rows.., ..])
    }

    /// `sum_j w_j lambda_(j)` for a nonincreasing weight vector.
    pub fn weighted_value(&self, w: &[f64]) -> f64 {
        w.iter()
            .zip(self.eigenvalues.iter())
            .map(|(wj, lj)| wj * lj)
            .sum()
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Contract("empty weight vector".into()));
    }
    if w.windows(2).any(|p| p[1] > p[0]) || w[w.len() - 1] < 0.0 {
        return Err(Error::Contract(
            "weights must be nonincreasing and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Full ascending spectrum of `L_sym(A_bp(x))` from the singular values of
/// `tsym(x)`: `{1 - sigma_i} ∪ {1, ... (R+C-2 min)} ∪ {1 + sigma_i}`.
pub fn sym_laplacian_spectrum(x: &Array2<f64>) -> Vec<f64> {
    let (r, c) = x.dim();
    let sigma = linalg::singular_values(&tsym(x));
    let mut evals: Vec<f64> = sigma.iter().map(|s| 1.0 - s).collect();
    evals.extend(std::iter::repeat_n(1.0, r + c - 2 * r.min(c)));
    evals.extend(sigma.iter().rev().map(|s| 1.0 + s));
    evals
}

fn nonzero_rows_cols(x: &Array2<f64>) -> (Vec<usize>, Vec<usize>) {
    let rows = x
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&v| v != 0.0))
        .map(|(i, _)| i)
        .collect();
    let cols = x
        .columns()
        .into_iter()
        .enumerate()
        .filter(|(_, col)| col.iter().any(|&v| v != 0.0))
        .map(|(j, _)| j)
        .collect();
    (rows, cols)
}

/// `sum_{j<=K} w_j lambda_(j)(L_sym(A_bp(x)))`, evaluated through the
/// singular values of `tsym(x)`.
pub fn weighted_eigsum(x: &Array2<f64>, w: &[f64]) -> Result<f64> {
    check_weights(w)?;
    let (rows, cols) = nonzero_rows_cols(x);
    if w.len() > rows.len() + cols.len() {
        return Err(Error::Contract(format!(
            "K = {} exceeds the {} non-zero rows + {} non-zero columns",
            w.len(),
            rows.len(),
            cols.len()
        )));
    }
    let evals = sym_laplacian_spectrum(x);
    Ok(w.iter().zip(evals.iter()).map(|(wj, lj)| wj * lj).sum())
}

/// Smallest-`k` generalized eigenbasis of
/// `(L_un(A_bp(x)), diag(deg(A_bp(x))))` built from the SVD of `tsym(x)`.
///
/// Requires `k` at most the number of non-zero rows plus non-zero columns;
/// zero rows/columns are removed, the reduced problem solved, and zero rows
/// padded back into the basis.
pub fn smallest_generalized_eigenbasis(x: &Array2<f64>, k: usize) -> Result<EigenBasis> {
    if k == 0 {
        return Err(Error::Contract("eigenbasis needs k >= 1".into()));
    }
    let (r, c) = x.dim();
    let (live_rows, live_cols) = nonzero_rows_cols(x);
    if k > live_rows.len() + live_cols.len() {
        return Err(Error::Contract(format!(
            "k = {k} exceeds the {} non-zero rows + {} non-zero columns",
            live_rows.len(),
            live_cols.len()
        )));
    }

    if live_rows.len() == r && live_cols.len() == c {
        return dense_case_basis(x, k);
    }

    // Reduce, solve, pad zero rows back in.
    let reduced = Array2::from_shape_fn((live_rows.len(), live_cols.len()), |(i, j)| {
        x[[live_rows[i], live_cols[j]]]
    });
    let inner = dense_case_basis(&reduced, k)?;
    let mut u = Array2::zeros((r + c, k));
    for (i_red, &i) in live_rows.iter().enumerate() {
        u.row_mut(i).assign(&inner.u.row(i_red));
    }
    for (j_red, &j) in live_cols.iter().enumerate() {
        u.row_mut(r + j).assign(&inner.u.row(live_rows.len() + j_red));
    }
    Ok(EigenBasis {
        u,
        eigenvalues: inner.eigenvalues,
        attained_value: inner.attained_value,
        rows: r,
        cols: c,
    })
}

/// Basis construction when `x` has no zero rows or columns.
fn dense_case_basis(x: &Array2<f64>, k: usize) -> Result<EigenBasis> {
    let (r, c) = x.dim();
    let m = r.min(c);
    let n = r + c;
    debug_assert!(k <= n);

    let t = tsym(x);
    let (u_left, sigma, u_right) = linalg::svd_thin(&t);
    let deg = degrees(&bipartite_adjacency(x));
    let d_inv_sqrt: Array1<f64> = deg.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });

    let mut u = Array2::zeros((n, k));
    let mut eigenvalues = Vec::with_capacity(k);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

    // Columns beyond the paired singular-vector block span the orthogonal
    // complement of the wider side's singular vectors (eigenvalue 1).
    let complement = if k > m {
        let wide = if r >= c { &u_left } else { &u_right };
        Some(linalg::orthonormal_complement(wide))
    } else {
        None
    };

    for col in 0..k {
        let mut xi = Array1::zeros(n);
        if col < m {
            // [u_left_j; u_right_j] / sqrt(2), eigenvalue 1 - sigma_j.
            for i in 0..r {
                xi[i] = u_left[[i, col]] * inv_sqrt2;
            }
            for j in 0..c {
                xi[r + j] = u_right[[j, col]] * inv_sqrt2;
            }
            eigenvalues.push(1.0 - sigma[col]);
        } else if col < r.max(c) {
            let q = complement.as_ref().expect("complement computed");
            let jq = col - m;
            if r >= c {
                for i in 0..r {
                    xi[i] = q[[i, jq]];
                }
            } else {
                for j in 0..c {
                    xi[r + j] = q[[j, jq]];
                }
            }
            eigenvalues.push(1.0);
        } else {
            // Difference vectors, smallest singular values first
            // (eigenvalue 1 + sigma ascending).
            let j_small = col - r.max(c);
            let idx = m - 1 - j_small;
            for i in 0..r {
                xi[i] = u_left[[i, idx]] * inv_sqrt2;
            }
            for j in 0..c {
                xi[r + j] = -u_right[[j, idx]] * inv_sqrt2;
            }
            eigenvalues.push(1.0 + sigma[idx]);
        }
        for i in 0..n {
            u[[i, col]] = d_inv_sqrt[i] * xi[i];
        }
    }

    let attained_value = eigenvalues.iter().sum();
    Ok(EigenBasis {
        u,
        eigenvalues,
        attained_value,
        rows: r,
        cols: c,
    })
}

/// Generalized eigenvalues of `(a, b)` for symmetric `a` and PSD `b` with
/// `ker(b) ⊆ ker(a)`, ascending: the eigenvalues of `b^{-1/2} a b^{-1/2}`
/// (pseudo-inverse) restricted to the range of `b`.
///
/// Dense and slow by design; this is the test oracle for the SVD path.
pub fn generalized_eigenvalues(a: &Array2<f64>, b: &Array2<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.dim() != (n, n) || b.dim() != (n, n) {
        return Err(Error::Shape("generalized eigenvalues need square matrices".into()));
    }
    let (mu, v) = linalg::symmetric_eigen(b);
    let mu_max = mu.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
    let kernel_tol = 1e-10 * mu_max;
    let range: Vec<usize> = (0..n).filter(|&i| mu[i] > kernel_tol).collect();

    // Kernel containment check: b-kernel vectors must be annihilated by a.
    let a_scale = a.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
    for i in 0..n {
        if mu[i] <= kernel_tol {
            let vec = v.column(i);
            let av = a.dot(&vec);
            let resid = av.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            if resid > 1e-8 * a_scale {
                return Err(Error::Contract(format!(
                    "ker(b) not contained in ker(a): residual {resid:e}"
                )));
            }
        }
    }

    let m = range.len();
    let mut reduced = Array2::zeros((m, m));
    for (p, &i) in range.iter().enumerate() {
        for (q, &j) in range.iter().enumerate() {
            let mut acc = 0.0;
            for s in 0..n {
                let mut t = 0.0;
                for r in 0..n {
                    t += v[[r, i]] * a[[r, s]];
                }
                acc += t * v[[s, j]];
            }
            reduced[[p, q]] = acc / (mu[i].sqrt() * mu[j].sqrt());
        }
    }
    Ok(linalg::symmetric_eigenvalues(&reduced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::unnormalized_laplacian;
    use ndarray::array;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feasibility_residual(x: &Array2<f64>, basis: &EigenBasis) -> f64 {
        let deg = degrees(&bipartite_adjacency(x));
        let k = basis.k();
        let mut worst = 0.0f64;
        for p in 0..k {
            for q in 0..k {
                let mut acc = 0.0;
                for i in 0..deg.len() {
                    acc += basis.u[[i, p]] * deg[i] * basis.u[[i, q]];
                }
                let want = if p == q { 1.0 } else { 0.0 };
                worst = worst.max((acc - want).abs());
            }
        }
        worst
    }

    fn trace_objective(x: &Array2<f64>, basis: &EigenBasis, w: &[f64]) -> f64 {
        let l_un = unnormalized_laplacian(&bipartite_adjacency(x));
        let lu = l_un.dot(&basis.u);
        let mut acc = 0.0;
        for j in 0..basis.k() {
            acc += w[j] * basis.u.column(j).dot(&lu.column(j));
        }
        acc
    }

    #[test]
    fn connected_ones_matrix_gives_zero_value() {
        let x = Array2::ones((2, 2));
        let basis = smallest_generalized_eigenbasis(&x, 1).unwrap();
        assert!(basis.attained_value.abs() < 1e-12);
        // Degree-normalized block indicator: all entries equal in magnitude.
        let first = basis.u[[0, 0]].abs();
        assert!(basis.u.iter().all(|v| (v.abs() - first).abs() < 1e-10));
        assert!(feasibility_residual(&x, &basis) < 1e-10);
    }

    #[test]
    fn two_blocks_attain_zero() {
        let mut x = Array2::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                x[[i, j]] = 1.0;
                x[[i + 2, j + 2]] = 1.0;
            }
        }
        let basis = smallest_generalized_eigenbasis(&x, 2).unwrap();
        assert!(basis.attained_value.abs() < 1e-10);
        assert!(feasibility_residual(&x, &basis) < 1e-9);
        assert!(trace_objective(&x, &basis, &[1.0, 1.0]).abs() < 1e-9);
    }

    #[test]
    fn attained_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((6, 5), |_| 0.05 + rng.random::<f64>());
        let basis = smallest_generalized_eigenbasis(&x, 3).unwrap();
        let adj = bipartite_adjacency(&x);
        let oracle =
            generalized_eigenvalues(&unnormalized_laplacian(&adj), &diag(&degrees(&adj))).unwrap();
        let want: f64 = oracle[..3].iter().sum();
        assert!((basis.attained_value - want).abs() < 1e-8);
        assert!((trace_objective(&x, &basis, &[1.0; 3]) - want).abs() < 1e-8);
    }

    fn diag(v: &Array1<f64>) -> Array2<f64> {
        Array2::from_diag(v)
    }

    #[test]
    fn weighted_eigsum_examples() {
        // Block diagonal with >= K blocks: zero.
        let x = Array2::from_diag(&array![1.0, 2.0, 3.0]);
        assert!(weighted_eigsum(&x, &[1.0, 1.0]).unwrap().abs() < 1e-12);
        // ones(2,2), w = [1, 1]: spectrum {0, 1, 1, 2}.
        let v = weighted_eigsum(&Array2::ones((2, 2)), &[1.0, 1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // Connected graph: single smallest eigenvalue is 0.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((4, 6), |_| 0.1 + rng.random::<f64>());
        assert!(weighted_eigsum(&x, &[1.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn weighted_eigsum_rejects_bad_weights() {
        let x = Array2::ones((3, 3));
        assert!(weighted_eigsum(&x, &[0.5, 1.0]).is_err());
        assert!(weighted_eigsum(&x, &[1.0, -0.1]).is_err());
    }

    #[test]
    fn k_larger_than_support_rejected() {
        let mut x = Array2::ones((3, 3));
        x.row_mut(2).fill(0.0);
        x.column_mut(2).fill(0.0);
        let err = smallest_generalized_eigenbasis(&x, 5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 non-zero rows"), "{msg}");
        assert!(msg.contains("2 non-zero columns"), "{msg}");
    }

    #[test]
    fn generalized_eigenvalue_oracle_cases() {
        // b = I reduces to ordinary eigenvalues.
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let vals = generalized_eigenvalues(&a, &Array2::eye(2)).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-10 && (vals[1] - 3.0).abs() < 1e-10);

        // Singular b with one kernel direction.
        let vals = generalized_eigenvalues(
            &Array2::from_diag(&array![2.0, 0.0]),
            &Array2::from_diag(&array![1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(vals.len(), 1);
        assert!((vals[0] - 2.0).abs() < 1e-12);

        // Kernel containment violation is a contract error.
        assert!(
            generalized_eigenvalues(
                &Array2::from_diag(&array![2.0, 1.0]),
                &Array2::from_diag(&array![1.0, 0.0]),
            )
            .is_err()
        );

        // Full pair equals the symmetric Laplacian spectrum when there are
        // no zero rows/columns.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((4, 5), |_| 0.1 + rng.random::<f64>());
        let adj = bipartite_adjacency(&x);
        let gevals =
            generalized_eigenvalues(&unnormalized_laplacian(&adj), &diag(&degrees(&adj))).unwrap();
        let sym = sym_laplacian_spectrum(&x);
        for (g, s) in gevals.iter().zip(sym.iter()) {
            assert!((g - s).abs() < 1e-8);
        }
    }

    #[test]
    fn eigsum_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..200 {
            let r = rng.random_range(2..=20);
            let c = rng.random_range(2..=20);
            let mut x = Array2::from_shape_fn((r, c), |_| 0.02 + rng.random::<f64>());
            // ~10% of cases get a zero row or column.
            let mut live_r = r;
            let mut live_c = c;
            if trial % 10 == 3 && r > 2 {
                x.row_mut(r - 1).fill(0.0);
                live_r -= 1;
            }
            if trial % 10 == 7 && c > 2 {
                x.column_mut(c - 1).fill(0.0);
                live_c -= 1;
            }
            let k = rng.random_range(1..=live_r.min(live_c));
            let w = vec![1.0; k];
            let got = weighted_eigsum(&x, &w).unwrap();
            let adj = bipartite_adjacency(&x);
            let oracle =
                generalized_eigenvalues(&unnormalized_laplacian(&adj), &diag(&degrees(&adj)))
                    .unwrap();
            let want: f64 = oracle[..k].iter().sum();
            assert!(
                (got - want).abs() < 1e-8,
                "trial {trial}: eigsum {got} vs oracle {want}"
            );
        }
    }

    #[test]
    fn padding_zero_rows_keeps_objective_and_feasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut x = Array2::from_shape_fn((6, 4), |_| 0.05 + rng.random::<f64>());
        x.row_mut(3).fill(0.0);
        let basis = smallest_generalized_eigenbasis(&x, 3).unwrap();
        // Padded rows are zero.
        assert!(basis.u.row(3).iter().all(|&v| v == 0.0));
        assert!(feasibility_residual(&x, &basis) < 1e-9);
        // Identical objective to the reduced problem.
        let reduced = {
            let rows: Vec<usize> = (0..6).filter(|&i| i != 3).collect();
            Array2::from_shape_fn((5, 4), |(i, j)| x[[rows[i], j]])
        };
        let inner = smallest_generalized_eigenbasis(&reduced, 3).unwrap();
        assert!((basis.attained_value - inner.attained_value).abs() < 1e-12);
        assert!(
            (trace_objective(&x, &basis, &[1.0; 3]) - basis.attained_value).abs() < 1e-8
        );
    }

    #[test]
    fn basis_attains_extremal_optimum_with_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let r = rng.random_range(2..=8);
            let c = rng.random_range(2..=8);
            let x = Array2::from_shape_fn((r, c), |_| 0.05 + rng.random::<f64>());
            let k = rng.random_range(1..=(r + c).min(r.min(c) + 1));
            let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            w.sort_by(|a, b| b.total_cmp(a));
            let basis = smallest_generalized_eigenbasis(&x, k).unwrap();
            let adj = bipartite_adjacency(&x);
            let oracle =
                generalized_eigenvalues(&unnormalized_laplacian(&adj), &diag(&degrees(&adj)))
                    .unwrap();
            let want: f64 = w.iter().zip(oracle.iter()).map(|(a, b)| a * b).sum();
            let got = trace_objective(&x, &basis, &w);
            assert!((got - want).abs() < 1e-8, "weighted trace {got} vs {want}");
            assert!(feasibility_residual(&x, &basis) < 1e-8);
        }
    }
}
