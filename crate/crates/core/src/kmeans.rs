//! k-means with k-means++ seeding, used for mixture initialization and for
//! the co-clustering baseline.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::RngExt;

use crate::error::{Error, Result};

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: returns `k` distinct row indices of `data`.
pub fn kmeans_plus_plus(data: &Array2<f64>, k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "cannot seed {k} centers from {n} points"
        )));
    }
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut dist: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a center; pick any unused.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        chosen.push(next);
        for i in 0..n {
            let d = sq_dist(data.row(i), data.row(next));
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    Ok(chosen)
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
}

/// Lloyd iterations with k-means++ seeding; `n_restarts` runs keep the
/// lowest inertia.
pub fn kmeans(
    data: &Array2<f64>,
    k: usize,
    n_restarts: usize,
    max_iter: usize,
    rng: &mut impl Rng,
) -> Result<KmeansFit> {
    let (n, d) = data.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "cannot cluster {n} points into {k} groups"
        )));
    }
    let mut best: Option<KmeansFit> = None;
    for _ in 0..n_restarts.max(1) {
        let seeds = kmeans_plus_plus(data, k, rng)?;
        let mut centers = Array2::zeros((k, d));
        for (c, &i) in seeds.iter().enumerate() {
            centers.row_mut(c).assign(&data.row(i));
        }
        let mut labels = vec![0usize; n];
        for _ in 0..max_iter {
            let mut changed = false;
            for i in 0..n {
                let mut arg = 0;
                let mut bestd = f64::INFINITY;
                for c in 0..k {
                    let dist = sq_dist(data.row(i), centers.row(c));
                    if dist < bestd {
                        bestd = dist;
                        arg = c;
                    }
                }
                if labels[i] != arg {
                    labels[i] = arg;
                    changed = true;
                }
            }
            let mut sums = Array2::<f64>::zeros((k, d));
            let mut counts = vec![0usize; k];
            for i in 0..n {
                counts[labels[i]] += 1;
                let mut row = sums.row_mut(labels[i]);
                row += &data.row(i);
            }
            for c in 0..k {
                if counts[c] > 0 {
                    let mut row = sums.row_mut(c);
                    row /= counts[c] as f64;
                    centers.row_mut(c).assign(&sums.row(c));
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| sq_dist(data.row(i), centers.row(labels[i])))
            .sum();
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KmeansFit {
                labels,
                centers,
                inertia,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
