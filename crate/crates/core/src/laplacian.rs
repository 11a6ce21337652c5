//! Bipartite / multi-partite graph machinery for nonnegative tables.
//!
//! A nonnegative matrix `X` is identified with the weighted bipartite graph
//! on its rows and columns whose edge weights are the entries of `X`; a
//! nonnegative multi-array is identified with the analogous V-partite graph
//! where an edge weight between two axis positions is the sum of the table
//! over all remaining axes. Connected components with at least two vertices
//! correspond to the blocks of the table under row/column permutations, and
//! isolated vertices to zero rows/columns (zero slices).
//!
//! Block counting is done combinatorially with union-find on the support;
//! the Laplacian spectra expose the same structure (the symmetric Laplacian
//! has exactly one zero eigenvalue per block, the unnormalized Laplacian one
//! per block plus one per zero row/column) and are used as a cross-check and
//! for diagnostics.

use ndarray::{Array1, Array2, ArrayViewD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Adjacency `[[0, X], [X^T, 0]]` of the weighted bipartite graph of `x`.
pub fn bipartite_adjacency(x: &Array2<f64>) -> Array2<f64> {
    let (r, c) = x.dim();
    let n = r + c;
    let mut adj = Array2::zeros((n, n));
    for i in 0..r {
        for j in 0..c {
            adj[[i, r + j]] = x[[i, j]];
            adj[[r + j, i]] = x[[i, j]];
        }
    }
    adj
}

/// Adjacency of the weighted V-partite graph of a multi-array.
///
/// Vertices are the axis positions `(axis, index)` in axis-major order. The
/// edge weight between `(a, j_a)` and `(b, j_b)`, `a != b`, is the sum of the
/// table over all entries whose `a`th coordinate is `j_a` and `b`th is `j_b`.
/// For two axes this reduces to [`bipartite_adjacency`].
pub fn multiarray_adjacency(x: &ArrayViewD<'_, f64>) -> Result<Array2<f64>> {
    let shape = x.shape().to_vec();
    let v = shape.len();
    if v < 2 {
        return Err(Error::Shape(format!(
            "multiarray adjacency needs at least 2 axes, got {v}"
        )));
    }
    let offsets = axis_offsets(&shape);
    let n: usize = shape.iter().sum();
    let mut adj = Array2::zeros((n, n));
    for (idx, &val) in x.indexed_iter() {
        if val == 0.0 {
            continue;
        }
        for a in 0..v {
            for b in (a + 1)..v {
                let p = offsets[a] + idx[a];
                let q = offsets[b] + idx[b];
                adj[[p, q]] += val;
                adj[[q, p]] += val;
            }
        }
    }
    Ok(adj)
}

fn axis_offsets(shape: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(shape.len());
    let mut acc = 0;
    for &d in shape {
        offsets.push(acc);
        acc += d;
    }
    offsets
}

/// Vertex degrees `A 1`.
pub fn degrees(adjacency: &Array2<f64>) -> Array1<f64> {
    adjacency.sum_axis(ndarray::Axis(1))
}

/// Unnormalized Laplacian `diag(deg(A)) - A`.
pub fn unnormalized_laplacian(adjacency: &Array2<f64>) -> Array2<f64> {
    let deg = degrees(adjacency);
    let n = adjacency.nrows();
    let mut l = adjacency.mapv(|v| -v);
    for i in 0..n {
        l[[i, i]] += deg[i];
    }
    l
}

/// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
///
/// Zero degrees use the Moore–Penrose convention (their reciprocal is taken
/// to be zero), so the diagonal is identically 1 even for isolated vertices.
pub fn symmetric_laplacian(adjacency: &Array2<f64>) -> Array2<f64> {
    let deg = degrees(adjacency);
    let inv_sqrt: Array1<f64> = deg.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let n = adjacency.nrows();
    let mut l = Array2::eye(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && adjacency[[i, j]] != 0.0 {
                l[[i, j]] = -inv_sqrt[i] * adjacency[[i, j]] * inv_sqrt[j];
            }
        }
    }
    l
}

/// Degree-normalized matrix `diag(X 1)^{-1/2} X diag(X^T 1)^{-1/2}`.
///
/// This is the off-diagonal block of the symmetric Laplacian of the
/// bipartite graph: the Laplacian eigenvalues are `1 ± sigma_i` for its
/// singular values `sigma_i`, which all lie in `[0, 1]`. Zero row/column
/// sums again use the pseudo-inverse convention.
pub fn tsym(x: &Array2<f64>) -> Array2<f64> {
    let row_sums = x.sum_axis(ndarray::Axis(1));
    let col_sums = x.sum_axis(ndarray::Axis(0));
    let ri: Array1<f64> = row_sums.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let ci: Array1<f64> = col_sums.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    Array2::from_shape_fn(x.dim(), |(i, j)| ri[i] * x[[i, j]] * ci[j])
}

/// Support threshold: an entry counts as zero iff `|value| <= tol`.
/// Default is `1e-8` times the largest absolute entry.
pub fn default_support_tol(x: &ArrayViewD<'_, f64>) -> f64 {
    let max = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    1e-8 * max
}

/// Adjacency, degrees and both Laplacians of a table's graph.
#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    pub adjacency: Array2<f64>,
    pub degrees: Array1<f64>,
    pub l_un: Array2<f64>,
    pub l_sym: Array2<f64>,
    /// Only present for matrices.
    pub t_sym: Option<Array2<f64>>,
}

impl LaplacianBundle {
    pub fn from_matrix(x: &Array2<f64>) -> Self {
        let adjacency = bipartite_adjacency(x);
        let degrees = degrees(&adjacency);
        let l_un = unnormalized_laplacian(&adjacency);
        let l_sym = symmetric_laplacian(&adjacency);
        LaplacianBundle {
            adjacency,
            degrees,
            l_un,
            l_sym,
            t_sym: Some(tsym(x)),
        }
    }

    pub fn from_multiarray(x: &ArrayViewD<'_, f64>) -> Result<Self> {
        let adjacency = multiarray_adjacency(x)?;
        let degrees = degrees(&adjacency);
        let l_un = unnormalized_laplacian(&adjacency);
        let l_sym = symmetric_laplacian(&adjacency);
        Ok(LaplacianBundle {
            adjacency,
            degrees,
            l_un,
            l_sym,
            t_sym: None,
        })
    }
}

/// Permutation-invariant block structure of a nonnegative table.
///
/// Blocks are connected components of the support graph with at least two
/// vertices ("anything that can be a block is a block"); isolated vertices
/// are zero rows/columns (zero slices for multi-arrays). An all-zero table
/// has `num_blocks = 0` and is flagged degenerate rather than rejected,
/// since optimizer iterates may pass through it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockStructure {
    pub num_blocks: usize,
    pub degenerate: bool,
    /// Per axis, per index: block id, or `None` for a zero row/column/slice.
    pub axis_block: Vec<Vec<Option<usize>>>,
    /// Per axis: permutation realizing a maximally block diagonal
    /// arrangement (block by block, zero indices last).
    pub axis_perm: Vec<Vec<usize>>,
}

impl BlockStructure {
    pub fn row_block(&self) -> &[Option<usize>] {
        &self.axis_block[0]
    }

    pub fn col_block(&self) -> &[Option<usize>] {
        &self.axis_block[1]
    }

    pub fn row_perm(&self) -> &[usize] {
        &self.axis_perm[0]
    }

    pub fn col_perm(&self) -> &[usize] {
        &self.axis_perm[1]
    }

    pub fn zero_rows(&self) -> Vec<usize> {
        self.zero_indices(0)
    }

    pub fn zero_cols(&self) -> Vec<usize> {
        self.zero_indices(1)
    }

    pub fn zero_indices(&self, axis: usize) -> Vec<usize> {
        self.axis_block[axis]
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Total number of zero rows/columns/slices over all axes.
    pub fn num_zero_slices(&self) -> usize {
        (0..self.axis_block.len())
            .map(|a| self.zero_indices(a).len())
            .sum()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Count blocks of a table up to permutations via union-find on its support.
///
/// Entries with `|value| <= support_tol` are treated as zero. This is the
/// authoritative block count; spectral counting is exposed separately as a
/// cross-check ([`zero_eigenvalue_count`] on the symmetric Laplacian must
/// agree).
pub fn count_blocks(x: &ArrayViewD<'_, f64>, support_tol: f64) -> BlockStructure {
    let shape = x.shape().to_vec();
    let v = shape.len();
    assert!(v >= 2, "block counting needs at least 2 axes");
    let offsets = axis_offsets(&shape);
    let n: usize = shape.iter().sum();

    let mut uf = UnionFind::new(n);
    let mut touched = vec![false; n];
    for (idx, &val) in x.indexed_iter() {
        if val.abs() <= support_tol {
            continue;
        }
        let first = offsets[0] + idx[0];
        touched[first] = true;
        for a in 1..v {
            let vert = offsets[a] + idx[a];
            touched[vert] = true;
            uf.union(first, vert);
        }
    }

    // Canonical block ids: ordered by the smallest vertex in each component.
    let mut block_of_root: Vec<Option<usize>> = vec![None; n];
    let mut num_blocks = 0;
    for vert in 0..n {
        if !touched[vert] {
            continue;
        }
        let root = uf.find(vert);
        if block_of_root[root].is_none() {
            block_of_root[root] = Some(num_blocks);
            num_blocks += 1;
        }
    }

    let mut axis_block = Vec::with_capacity(v);
    let mut axis_perm = Vec::with_capacity(v);
    for a in 0..v {
        let blocks: Vec<Option<usize>> = (0..shape[a])
            .map(|j| {
                let vert = offsets[a] + j;
                if touched[vert] {
                    block_of_root[uf.find(vert)]
                } else {
                    None
                }
            })
            .collect();
        let mut perm: Vec<usize> = (0..shape[a]).collect();
        perm.sort_by_key(|&j| (blocks[j].unwrap_or(usize::MAX), j));
        axis_block.push(blocks);
        axis_perm.push(perm);
    }

    BlockStructure {
        num_blocks,
        degenerate: num_blocks == 0,
        axis_block,
        axis_perm,
    }
}

/// Matrix convenience wrapper for [`count_blocks`].
pub fn count_blocks_matrix(x: &Array2<f64>, support_tol: f64) -> BlockStructure {
    count_blocks(&x.view().into_dyn(), support_tol)
}

/// Sorted spectra of both Laplacians of the bipartite graph of `x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Eigenvalues of the symmetric normalized Laplacian, ascending.
    pub sym: Vec<f64>,
    /// Eigenvalues of the unnormalized Laplacian, ascending.
    pub un: Vec<f64>,
}

pub fn spectrum_report(x: &Array2<f64>) -> SpectrumReport {
    let bundle = LaplacianBundle::from_matrix(x);
    SpectrumReport {
        sym: linalg::symmetric_eigenvalues(&bundle.l_sym),
        un: linalg::symmetric_eigenvalues(&bundle.l_un),
    }
}

/// Number of numerically-zero eigenvalues, with tolerance
/// `1e-10 * max(largest eigenvalue, 1)`.
pub fn zero_eigenvalue_count(eigenvalues: &[f64]) -> usize {
    let max = eigenvalues.iter().fold(1.0f64, |m, &v| m.max(v));
    let tol = 1e-10 * max;
    eigenvalues.iter().filter(|&&v| v.abs() <= tol).count()
}
