//! Shared generators and independent oracles for the acceptance suite.

use ndarray::Array2;
use rand::RngExt;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Random matrix with `b` planted blocks, the requested number of zero
/// rows/columns, and shuffled rows and columns.
pub fn random_planted(
    rng: &mut ChaCha8Rng,
    r: usize,
    c: usize,
    b: usize,
    zero_rows: usize,
    zero_cols: usize,
) -> Array2<f64> {
    let live_r = r - zero_rows;
    let live_c = c - zero_cols;
    assert!(b >= 1 && b <= live_r.min(live_c));
    let split = |n: usize| {
        let mut cuts: Vec<usize> = (1..b).map(|i| i * n / b).collect();
        cuts.dedup();
        let mut sizes = Vec::new();
        let mut prev = 0;
        for &cut in &cuts {
            sizes.push(cut - prev);
            prev = cut;
        }
        sizes.push(n - prev);
        sizes
    };
    let rs = split(live_r);
    let cs = split(live_c);
    let mut x = Array2::zeros((r, c));
    let (mut ro, mut co) = (0, 0);
    for (&nr, &nc) in rs.iter().zip(cs.iter()) {
        for i in ro..ro + nr {
            for j in co..co + nc {
                x[[i, j]] = 0.1 + rng.random::<f64>();
            }
        }
        ro += nr;
        co += nc;
    }
    let mut rp: Vec<usize> = (0..r).collect();
    let mut cp: Vec<usize> = (0..c).collect();
    rp.shuffle(rng);
    cp.shuffle(rng);
    let mut y = Array2::zeros((r, c));
    for i in 0..r {
        for j in 0..c {
            y[[rp[i], cp[j]]] = x[[i, j]];
        }
    }
    y
}

/// Projected gradient descent (Barzilai–Borwein steps, Armijo safeguard,
/// random restarts) for `min -sum a log z + lambda sum log(delta + z)` on
/// the probability simplex. Independent oracle for the soft-threshold
/// limit; no shared code with the fitters.
pub fn pg_simplex_oracle(
    a: &[f64],
    lambda: f64,
    delta: f64,
    starts: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let k = a.len();
    let objective = |z: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..k {
            if z[i] <= 0.0 {
                return f64::INFINITY;
            }
            acc += -a[i] * z[i].ln() + lambda * (delta + z[i]).ln();
        }
        acc
    };
    let gradient = |z: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| -a[i] / z[i] + lambda / (delta + z[i]))
            .collect()
    };
    let project = |v: &[f64]| -> Vec<f64> {
        let mut u = v.to_vec();
        u.sort_by(|x, y| y.total_cmp(x));
        let mut css = 0.0;
        let mut theta = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            css += ui;
            let t = (css - 1.0) / (i + 1) as f64;
            if ui - t > 0.0 {
                theta = t;
            }
        }
        v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..starts {
        let mut z: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = z.iter().sum();
        for v in z.iter_mut() {
            *v /= total;
        }
        let mut obj = objective(&z);
        let mut grad = gradient(&z);
        let mut step: f64 = 1e-3;
        let mut stalled = 0;
        for _ in 0..200_000 {
            let mut t = step.clamp(1e-14, 1e2);
            let mut accepted = None;
            for _ in 0..80 {
                let cand = project(&(0..k).map(|i| z[i] - t * grad[i]).collect::<Vec<_>>());
                let cobj = objective(&cand);
                if cobj <= obj - 1e-18 {
                    accepted = Some((cand, cobj));
                    break;
                }
                t *= 0.5;
            }
            let Some((z_new, obj_new)) = accepted else {
                break;
            };
            let grad_new = gradient(&z_new);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..k {
                let s = z_new[i] - z[i];
                let y = grad_new[i] - grad[i];
                ss += s * s;
                sy += s * y;
            }
            step = if sy > 1e-300 { ss / sy } else { step * 2.0 };
            let moved = ss.sqrt();
            let decreased = obj - obj_new;
            z = z_new;
            obj = obj_new;
            grad = grad_new;
            if moved < 1e-14 && decreased < 1e-15 * (obj.abs() + 1.0) {
                stalled += 1;
                if stalled > 5 {
                    break;
                }
            } else {
                stalled = 0;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, z));
        }
    }
    best.expect("at least one start").1
}
