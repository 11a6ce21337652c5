//! Multi-view mixture models (MVMM) with structured cluster membership tables.
//!
//! A multi-view data set measures the same observations through several
//! disjoint variable sets (views). The MVMM couples one mixture model per
//! view through a joint table `pi` of cluster membership probabilities;
//! the sparsity / block structure of `pi` describes how clustering
//! information is shared between views.
//!
//! The crate provides three fitters plus a baseline:
//!
//! - [`model::fit_em`] — unpenalized EM for the basic MVMM,
//! - [`log_pen::fit_log_pen`] — sparse `pi` via a log penalty whose M-step
//!   reduces to normalized soft-thresholding,
//! - [`bd::fit_bd`] — block diagonally constrained `pi` via a penalty on the
//!   smallest eigenvalues of the symmetric Laplacian of the bipartite graph
//!   of `pi`, solved by an alternating eigen / convex-program scheme,
//! - [`mixtures::fit_gmm`] — a single-view diagonal GMM (the concatenated
//!   "cat" baseline).
//!
//! Supporting machinery lives in [`laplacian`] (bipartite adjacency,
//! Laplacians, permutation-invariant block counting), [`geig`] (generalized
//! eigen subproblems through the SVD of a degree-normalized matrix),
//! [`block_diag`] (the generic alternating solver), [`select`] (BIC, ARI,
//! bipartite spectral co-clustering) and [`sim`] (synthetic experiment
//! harness). The `mvmm` binary exposes all of this on the command line.

pub mod bd;
pub mod block_diag;
pub mod error;
pub mod geig;
pub mod io;
pub mod kmeans;
pub mod laplacian;
pub mod log_pen;
pub mod mixtures;
pub mod model;
pub mod select;
pub mod sim;
pub mod solver;

mod linalg;

pub use error::{Error, Result};
