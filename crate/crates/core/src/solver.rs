//! Barrier Newton solver for separable convex programs of the form
//!
//! ```text
//! minimize    f(x) + l^T x
//! subject to  A x = b,  x >= 0
//! ```
//!
//! with `f` smooth, convex and separable on `x > 0`. The nonnegativity
//! constraint is handled with a log barrier `-mu * sum log(x_i)` merged into
//! the objective; each barrier subproblem is solved by infeasible-start
//! Newton on the equality-constrained KKT system. Because `f` is separable
//! the Hessian is diagonal, so the Newton step reduces to a dense
//! `m x m` Schur-complement solve where `m` is the (small) number of
//! equality constraints. `mu` is decreased geometrically until it reaches
//! `mu_min`, at which point the barrier duals `s_i = mu / x_i` certify
//! complementary slackness to `mu_min`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;

/// Smooth separable part of the objective, defined for `x > 0`.
pub trait SeparableObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);
    /// Diagonal of the Hessian (entries must be >= 0).
    fn hessian_diag(&self, x: &[f64], h: &mut [f64]);
}

/// Quadratic `||x - target||^2`, used by the nearest-matrix oracle.
pub struct QuadraticObjective<'a> {
    pub target: &'a [f64],
}

impl SeparableObjective for QuadraticObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.target)
            .map(|(xi, ti)| (xi - ti) * (xi - ti))
            .sum()
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        for i in 0..x.len() {
            g[i] = 2.0 * (x[i] - self.target[i]);
        }
    }

    fn hessian_diag(&self, x: &[f64], h: &mut [f64]) {
        for i in 0..x.len() {
            h[i] = 2.0;
        }
    }
}

/// `-sum_i a_i log(eps + x_i)`, the M-step objective of the block diagonal
/// mixture fitter.
pub struct NegLogObjective<'a> {
    pub coeffs: &'a [f64],
    pub epsilon: f64,
}

impl SeparableObjective for NegLogObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.coeffs)
            .map(|(xi, ai)| -ai * (self.epsilon + xi).ln())
            .sum()
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        for i in 0..x.len() {
            g[i] = -self.coeffs[i] / (self.epsilon + x[i]);
        }
    }

    fn hessian_diag(&self, x: &[f64], h: &mut [f64]) {
        for i in 0..x.len() {
            let d = self.epsilon + x[i];
            h[i] = self.coeffs[i] / (d * d);
        }
    }
}

/// One equality constraint `coeffs . x = rhs`.
#[derive(Debug, Clone)]
pub struct EqRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// Select a well-conditioned maximal independent subset of constraint rows.
///
/// The numerical rank is the number of singular values of the stacked
/// system above `1e-10` times the largest; that many rows are then chosen
/// greedily by largest orthogonal residual (pivoted Gram–Schmidt). In-order
/// Gram–Schmidt alone is not rank revealing: normalizing a nearly dependent
/// row amplifies its round-off into a spurious basis direction.
pub fn prune_dependent_rows(eqs: &[EqRow], rel_tol: f64) -> Vec<EqRow> {
    let kept = select_independent_rows(
        &eqs.iter().map(|r| r.coeffs.clone()).collect::<Vec<_>>(),
        rel_tol,
    );
    kept.into_iter().map(|i| eqs[i].clone()).collect()
}

/// Indices of a well-conditioned independent subset of `rows` (see
/// [`prune_dependent_rows`]), in ascending order.
pub fn select_independent_rows(rows: &[Vec<f64>], rel_tol: f64) -> Vec<usize> {
    if rows.is_empty() {
        return Vec::new();
    }
    let dim = rows[0].len();
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect();
    let max_norm = norms.iter().copied().fold(0.0f64, f64::max);
    // Rows orders of magnitude below the dominant scale are numerical
    // residue of constraints that became inactive; drop them up front.
    let live: Vec<usize> = (0..rows.len())
        .filter(|&i| norms[i] > 1e-7 * max_norm)
        .collect();
    if live.is_empty() {
        return Vec::new();
    }
    let stacked = Array2::from_shape_fn((live.len(), dim), |(i, j)| rows[live[i]][j]);
    let sigma = crate::linalg::singular_values(&stacked);
    let tol = rel_tol * sigma.first().copied().unwrap_or(0.0).max(1e-300);
    let rank = sigma.iter().filter(|&&s| s > tol).count();

    let mut residual: Vec<Vec<f64>> = live.iter().map(|&i| rows[i].clone()).collect();
    let mut available: Vec<usize> = (0..live.len()).collect();
    let mut kept = Vec::with_capacity(rank);
    while kept.len() < rank && !available.is_empty() {
        let (pos, _) = available
            .iter()
            .enumerate()
            .map(|(p, &i)| {
                let n: f64 = residual[i].iter().map(|a| a * a).sum();
                (p, n)
            })
            .max_by(|(pa, na), (pb, nb)| na.total_cmp(nb).then(pb.cmp(pa)))
            .expect("nonempty");
        let idx = available.swap_remove(pos);
        let mut q = residual[idx].clone();
        let qn = q.iter().map(|a| a * a).sum::<f64>().sqrt();
        if qn <= tol {
            break;
        }
        for v in q.iter_mut() {
            *v /= qn;
        }
        for &i in &available {
            let dot: f64 = residual[i].iter().zip(&q).map(|(a, b)| a * b).sum();
            for (vi, qi) in residual[i].iter_mut().zip(&q) {
                *vi -= dot * qi;
            }
        }
        kept.push(live[idx]);
    }
    kept.sort_unstable();
    kept
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub mu0: f64,
    pub mu_factor: f64,
    pub mu_min: f64,
    pub newton_tol: f64,
    pub max_newton_per_round: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mu0: 1.0,
            mu_factor: 0.2,
            mu_min: 1e-12,
            newton_tol: 1e-11,
            max_newton_per_round: 200,
        }
    }
}

/// First-order optimality residuals for the original (un-barriered) program.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    /// `||grad f + l - A^T nu - s||_inf` with `s` the nonnegativity duals.
    pub stationarity: f64,
    /// `max(||A x - b||_inf, max(0, -min x))`.
    pub primal: f64,
    /// `max_i |x_i s_i|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    /// Multipliers for the equality rows.
    pub eq_multipliers: Vec<f64>,
    /// Duals for `x >= 0` (from the final barrier parameter).
    pub nonneg_duals: Vec<f64>,
    pub newton_iterations: usize,
    pub kkt: KktResiduals,
}

pub fn kkt_residuals(
    obj: &dyn SeparableObjective,
    linear: &[f64],
    eqs: &[EqRow],
    x: &[f64],
    nu: &[f64],
    s: &[f64],
) -> KktResiduals {
    let n = x.len();
    let mut g = vec![0.0; n];
    obj.gradient(x, &mut g);
    let mut stationarity = 0.0f64;
    for i in 0..n {
        let mut v = g[i] + linear[i] - s[i];
        for (row, &nuj) in eqs.iter().zip(nu) {
            v -= nuj * row.coeffs[i];
        }
        stationarity = stationarity.max(v.abs());
    }
    let mut primal = x.iter().fold(0.0f64, |m, &xi| m.max(-xi));
    for row in eqs {
        let ax: f64 = row.coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum();
        primal = primal.max((ax - row.rhs).abs());
    }
    let complementarity = x
        .iter()
        .zip(s)
        .fold(0.0f64, |m, (&xi, &si)| m.max((xi * si).abs()));
    KktResiduals {
        stationarity,
        primal,
        complementarity,
    }
}

/// Minimize `obj(x) + linear . x` subject to `eqs` and `x >= 0`.
///
/// `x0` is clamped to be strictly positive; it does not need to satisfy the
/// equality constraints (infeasible-start Newton drives them to zero).
pub fn minimize_nonneg_eq(
    obj: &dyn SeparableObjective,
    linear: &[f64],
    eqs: &[EqRow],
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let n = x0.len();
    for row in eqs {
        if row.coeffs.len() != n {
            return Err(Error::Shape("constraint row length mismatch".into()));
        }
    }
    // Equilibrate: unit-norm rows keep the Schur system well scaled.
    // Multipliers are mapped back to the caller's row scaling on exit.
    let row_norms: Vec<f64> = eqs
        .iter()
        .map(|r| {
            r.coeffs
                .iter()
                .map(|a| a * a)
                .sum::<f64>()
                .sqrt()
                .max(1e-300)
        })
        .collect();
    let eqs: Vec<EqRow> = eqs
        .iter()
        .zip(&row_norms)
        .map(|(r, &nrm)| EqRow {
            coeffs: r.coeffs.iter().map(|c| c / nrm).collect(),
            rhs: r.rhs / nrm,
        })
        .collect();
    let eqs = &eqs[..];
    let m = eqs.len();

    let mut x: Vec<f64> = x0.iter().map(|&v| v.max(1e-12)).collect();
    let mut nu = vec![0.0; m];
    let mut mu = opts.mu0;
    let mut total_newton = 0;

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    loop {
        let round_tol = opts.newton_tol.max(1e-4 * mu);
        let mut round_iters = 0;
        loop {
            obj.gradient(&x, &mut grad);
            obj.hessian_diag(&x, &mut hess);

            // Residuals of the barrier KKT system.
            let mut r_dual = vec![0.0; n];
            for i in 0..n {
                r_dual[i] = grad[i] + linear[i] - mu / x[i];
                for (row, &nuj) in eqs.iter().zip(nu.iter()) {
                    r_dual[i] += nuj * row.coeffs[i];
                }
            }
            let mut r_pri = vec![0.0; m];
            for (j, row) in eqs.iter().enumerate() {
                r_pri[j] = row.coeffs.iter().zip(&x).map(|(c, xi)| c * xi).sum::<f64>() - row.rhs;
            }
            let res_inf = r_dual
                .iter()
                .chain(r_pri.iter())
                .fold(0.0f64, |acc, &v| acc.max(v.abs()));
            if res_inf <= round_tol {
                break;
            }
            if round_iters >= opts.max_newton_per_round {
                log::debug!("barrier round mu={mu:e} hit iteration cap at residual {res_inf:e}");
                break;
            }
            round_iters += 1;
            total_newton += 1;

            // Newton step through the Schur complement of the diagonal block.
            let mut h_inv = vec![0.0; n];
            for i in 0..n {
                h_inv[i] = 1.0 / (hess[i] + mu / (x[i] * x[i])).max(1e-300);
            }
            let dnu = if m > 0 {
                let mut schur = Array2::zeros((m, m));
                for p in 0..m {
                    for q in p..m {
                        let mut acc = 0.0;
                        for i in 0..n {
                            acc += eqs[p].coeffs[i] * h_inv[i] * eqs[q].coeffs[i];
                        }
                        schur[[p, q]] = acc;
                        schur[[q, p]] = acc;
                    }
                }
                // Small unconditional ridge; near-dependent rows otherwise
                // make the multiplier step explode.
                let base_ridge = 1e-13 * (0..m).map(|p| schur[[p, p]]).fold(0.0, f64::max);
                for p in 0..m {
                    schur[[p, p]] += base_ridge;
                }
                let mut rhs = Array1::zeros(m);
                for p in 0..m {
                    let mut acc = r_pri[p];
                    for i in 0..n {
                        acc -= eqs[p].coeffs[i] * h_inv[i] * r_dual[i];
                    }
                    rhs[p] = acc;
                }
                // Nearly dependent constraint rows make the Schur system
                // close to singular; a tiny ridge keeps the direction usable
                // (the line search still measures the true residual).
                let mut sol = linalg::lu_solve(&schur, &rhs);
                if sol.is_none() {
                    let scale = (0..m).map(|p| schur[[p, p]]).fold(1e-300, f64::max);
                    for ridge_exp in [-12, -10, -8] {
                        let mut damped = schur.clone();
                        let ridge = scale * 10f64.powi(ridge_exp);
                        for p in 0..m {
                            damped[[p, p]] += ridge;
                        }
                        sol = linalg::lu_solve(&damped, &rhs);
                        if sol.is_some() {
                            break;
                        }
                    }
                }
                match sol {
                    Some(s) => {
                        // One round of iterative refinement recovers digits
                        // lost to ill conditioning.
                        let mut refined = s;
                        let mut resid = rhs.clone();
                        for p in 0..m {
                            for q in 0..m {
                                resid[p] -= schur[[p, q]] * refined[q];
                            }
                        }
                        if let Some(corr) = linalg::lu_solve(&schur, &resid) {
                            refined += &corr;
                        }
                        refined.to_vec()
                    }
                    None => {
                        return Err(Error::Infeasible(
                            "singular constraint system in barrier solve \
                             (dependent rows survived pruning?)"
                                .into(),
                        ));
                    }
                }
            } else {
                Vec::new()
            };
            let mut dx = vec![0.0; n];
            for i in 0..n {
                let mut v = -r_dual[i];
                for (row, &dnuj) in eqs.iter().zip(dnu.iter()) {
                    v -= row.coeffs[i] * dnuj;
                }
                dx[i] = h_inv[i] * v;
            }

            // Fraction to the boundary, then backtrack on the residual norm.
            let mut alpha: f64 = 1.0;
            for i in 0..n {
                if dx[i] < 0.0 {
                    alpha = alpha.min(-0.99 * x[i] / dx[i]);
                }
            }
            let res_norm = |xt: &[f64], nut: &[f64]| -> f64 {
                let mut gt = vec![0.0; n];
                obj.gradient(xt, &mut gt);
                let mut acc = 0.0;
                for i in 0..n {
                    let mut v = gt[i] + linear[i] - mu / xt[i];
                    for (row, &nuj) in eqs.iter().zip(nut.iter()) {
                        v += nuj * row.coeffs[i];
                    }
                    acc += v * v;
                }
                for row in eqs.iter() {
                    let v =
                        row.coeffs.iter().zip(xt).map(|(c, xi)| c * xi).sum::<f64>() - row.rhs;
                    acc += v * v;
                }
                acc.sqrt()
            };
            let base = {
                let mut acc = 0.0;
                for v in r_dual.iter().chain(r_pri.iter()) {
                    acc += v * v;
                }
                acc.sqrt()
            };
            let mut accepted = false;
            for _ in 0..40 {
                let xt: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + alpha * di).collect();
                let nut: Vec<f64> = nu.iter().zip(&dnu).map(|(ni, di)| ni + alpha * di).collect();
                // The fp-noise margin keeps tiny boundary-limited steps from
                // being rejected once the demanded decrease is below the
                // resolution of the norm itself.
                let target = (1.0 - 0.01 * alpha) * base + 1e-13 * (base + 1.0);
                if xt.iter().all(|&v| v > 0.0) && res_norm(&xt, &nut) <= target {
                    x = xt;
                    nu = nut;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                log::debug!("barrier line search failed at mu={mu:e}, residual {base:e}");
                // No descent direction left at this barrier level; tighten mu
                // and retry rather than looping forever.
                break;
            }
        }

        if mu <= opts.mu_min {
            break;
        }
        mu = (mu * opts.mu_factor).max(opts.mu_min);
    }

    // The Newton iteration tracks `grad + A^T nu - s = 0`; flip the sign so
    // the reported multipliers satisfy the `grad - A^T nu - s = 0` form used
    // by `kkt_residuals`, and undo the row equilibration.
    let nu_out: Vec<f64> = nu
        .iter()
        .zip(&row_norms)
        .map(|(v, &nrm)| -v / nrm)
        .collect();
    let s: Vec<f64> = x.iter().map(|&xi| mu / xi).collect();
    let kkt = kkt_residuals(obj, linear, eqs, &x, &nu.iter().map(|v| -v).collect::<Vec<_>>(), &s);
    Ok(SolveOutcome {
        x,
        eq_multipliers: nu_out,
        nonneg_duals: s,
        newton_iterations: total_newton,
        kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Euclidean projection of `v` onto the probability simplex.
    fn project_simplex(v: &[f64]) -> Vec<f64> {
        let mut u = v.to_vec();
        u.sort_by(|a, b| b.total_cmp(a));
        let mut css = 0.0;
        let mut rho = 0;
        let mut theta = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            css += ui;
            let t = (css - 1.0) / (i + 1) as f64;
            if ui - t > 0.0 {
                rho = i + 1;
                theta = t;
            }
        }
        let _ = rho;
        v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
    }

    #[test]
    fn quadratic_on_simplex_matches_projection() {
        let target = vec![0.9, -0.3, 0.45, 0.2];
        let obj = QuadraticObjective { target: &target };
        let eqs = vec![EqRow {
            coeffs: vec![1.0; 4],
            rhs: 1.0,
        }];
        let out = minimize_nonneg_eq(
            &obj,
            &vec![0.0; 4],
            &eqs,
            &[0.25; 4],
            &SolverOptions::default(),
        )
        .unwrap();
        let want = project_simplex(&target);
        for (got, w) in out.x.iter().zip(&want) {
            assert!((got - w).abs() < 1e-7, "{got} vs {w}");
        }
        assert!(out.kkt.max() < 1e-8, "kkt {:?}", out.kkt);
    }

    #[test]
    fn neg_log_unconstrained_matches_closed_form() {
        // min -a log(eps + x) + b x over x >= 0 has minimizer (a/b - eps)_+.
        let cases = [(0.4, 2.0, 0.05), (0.1, 50.0, 0.2), (0.8, 0.9, 0.01)];
        for &(a, b, eps) in &cases {
            let obj = NegLogObjective {
                coeffs: &[a],
                epsilon: eps,
            };
            let out =
                minimize_nonneg_eq(&obj, &[b], &[], &[1.0], &SolverOptions::default()).unwrap();
            let want = (a / b - eps).max(0.0);
            assert!(
                (out.x[0] - want).abs() < 1e-6,
                "a={a} b={b} eps={eps}: {} vs {want}",
                out.x[0]
            );
            assert!(out.kkt.max() < 1e-8);
        }
    }

    #[test]
    fn infeasible_start_reaches_equality() {
        let target = vec![0.1, 0.2, 0.3];
        let obj = QuadraticObjective { target: &target };
        let eqs = vec![
            EqRow {
                coeffs: vec![1.0, 1.0, 1.0],
                rhs: 2.0,
            },
            EqRow {
                coeffs: vec![1.0, -1.0, 0.0],
                rhs: 0.25,
            },
        ];
        let out = minimize_nonneg_eq(
            &obj,
            &vec![0.0; 3],
            &eqs,
            &[5.0, 5.0, 5.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(out.kkt.primal < 1e-9);
        assert!(out.kkt.max() < 1e-8);
    }
}
