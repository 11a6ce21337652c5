//! Thin wrappers around dense decompositions, ndarray in / ndarray out.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

pub(crate) fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub(crate) fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    // Symmetrize so round-off in the caller cannot push us onto the
    // non-symmetric path.
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let se = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| se.eigenvectors[(i, order[j])]);
    (eigenvalues, vectors)
}

/// Eigenvalues only, ascending.
pub(crate) fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| x.total_cmp(y));
    vals
}

/// Thin SVD with singular values descending.
/// Returns `(u, sigma, v)` where `u` is `R x m`, `v` is `C x m`, `m = min(R, C)`.
pub(crate) fn svd_thin(a: &Array2<f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (r, c) = a.dim();
    let m = r.min(c);
    let svd = to_dmatrix(a).svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_arr = Array2::from_shape_fn((r, m), |(i, j)| u[(i, order[j])]);
    let v_arr = Array2::from_shape_fn((c, m), |(i, j)| vt[(order[j], i)]);
    (u_arr, sigma, v_arr)
}

/// Singular values only, descending.
pub(crate) fn singular_values(a: &Array2<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = to_dmatrix(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Solve the square system `a x = b` by LU with partial pivoting.
pub(crate) fn lu_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let lu = to_dmatrix(a).lu();
    let rhs = DVector::from_iterator(b.len(), b.iter().copied());
    lu.solve(&rhs)
        .map(|x| Array1::from_iter(x.iter().copied()))
}

/// Extend the orthonormal columns of `basis` (n x m) to a full orthonormal
/// basis of R^n and return the `n - m` new columns. Modified Gram–Schmidt
/// against standard basis vectors; fine at the dense scales used here.
pub(crate) fn orthonormal_complement(basis: &Array2<f64>) -> Array2<f64> {
    let (n, m) = basis.dim();
    assert!(m <= n);
    let mut cols: Vec<Array1<f64>> = (0..m).map(|j| basis.column(j).to_owned()).collect();
    let mut extra: Vec<Array1<f64>> = Vec::with_capacity(n - m);
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = Array1::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let dot = v.dot(c);
                v.scaled_add(-dot, c);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            v.mapv_inplace(|t| t / norm);
            extra.push(v.clone());
            cols.push(v);
        }
    }
    assert_eq!(cols.len(), n, "failed to complete orthonormal basis");
    let mut out = Array2::zeros((n, n - m));
    for (j, v) in extra.iter().enumerate() {
        out.column_mut(j).assign(v);
    }
    out
}
