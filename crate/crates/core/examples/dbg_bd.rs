use mvmm::bd::{BdConfig, fit_bd};
use mvmm::model::{EmConfig, MultiViewData};
use ndarray::Array2;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use std::time::Instant;

fn main() {
    env_logger::init();
    let k = 10usize;
    let d = 10usize;
    let n = 2500usize;
    let b = 5usize;
    let per = 2usize;
    for seed in 0u64..5 {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        // Means ~ N(0, sigma^2 I): sigma 1.0 view 1, 0.5 view 2.
        let means1 = Array2::from_shape_fn((k, d), |_| normal.sample(&mut rng));
        let means2 = Array2::from_shape_fn((k, d), |_| 0.5 * normal.sample(&mut rng));
        // True support: five 2x2 blocks, equal cell mass 1/20.
        let mut support = Vec::new();
        for blk in 0..b {
            for i in 0..per {
                for j in 0..per {
                    support.push((blk * per + i, blk * per + j));
                }
            }
        }
        let mut v1 = Array2::zeros((n, d));
        let mut v2 = Array2::zeros((n, d));
        let mut cells = Vec::new();
        for i in 0..n {
            let cell = support[rng.random_range(0..support.len())];
            cells.push(cell);
            for j in 0..d {
                v1[[i, j]] = means1[[cell.0, j]] + normal.sample(&mut rng);
                v2[[i, j]] = means2[[cell.1, j]] + normal.sample(&mut rng);
            }
        }
        let data = MultiViewData::new(vec![v1, v2]).unwrap();
        let em = EmConfig::new(vec![k, k], seed);
        let cfg = BdConfig::new(b, em);
        // Block truth labels for ARI evaluation.
        let block_truth: Vec<usize> = cells.iter().map(|c| c.0 / per).collect();
        // Bayes ceiling: predict blocks from the true generative model.
        {
            use mvmm::mixtures::{GaussianDiagComponent, ViewModel};
            use mvmm::model::{MvmmModel, ProbTable};
            use ndarray::{ArrayD, IxDyn};
            let mk_view = |means: &Array2<f64>| ViewModel {
                components: (0..k)
                    .map(|c| GaussianDiagComponent {
                        mean: means.row(c).to_owned(),
                        variance: ndarray::Array1::ones(d),
                    })
                    .collect(),
                dim: d,
            };
            let mut pi_vals = ArrayD::zeros(IxDyn(&[k, k]));
            for &(i, j) in &support {
                pi_vals[IxDyn(&[i, j])] = 1.0 / support.len() as f64;
            }
            let truth_model = MvmmModel::new(
                vec![mk_view(&means1), mk_view(&means2)],
                ProbTable::new(pi_vals).unwrap(),
            )
            .unwrap();
            let tol = 0.0;
            let truth_blocks = mvmm::laplacian::count_blocks_matrix(
                &truth_model.pi.as_matrix().unwrap(),
                tol,
            );
            let bayes = mvmm::bd::predict_block_labels(&truth_model, &truth_blocks, &data);
            let bayes_ari = mvmm::select::ari(&bayes, &block_truth).unwrap();
            println!("seed {seed}: bayes block ari {bayes_ari:.3}");
        }
        match fit_bd(&data, &cfg) {
            Ok(fit) => {
                let pred = mvmm::bd::predict_block_labels(&fit.model, &fit.blocks, &data);
                let b_ari = mvmm::select::ari(&pred, &block_truth).unwrap();
                // Match fitted view-2 components to true means by nearest
                // distance; count collisions (two fitted -> same truth).
                let mut hit = vec![0usize; k];
                for comp in &fit.model.views[1].components {
                    let mut best = (0usize, f64::INFINITY);
                    for t in 0..k {
                        let d2: f64 = (0..d)
                            .map(|j| (comp.mean[j] - means2[[t, j]]).powi(2))
                            .sum();
                        if d2 < best.1 { best = (t, d2); }
                    }
                    hit[best.0] += 1;
                }
                let collisions = hit.iter().filter(|&&h| h != 1).count();
                // Does the fitted support match the true 20 cells up to label
                // permutation? Check block structure instead: 5 blocks of 2x2.
                let mut sizes: Vec<(usize, usize)> = (0..fit.blocks.num_blocks)
                    .map(|blk| {
                        let r = fit.blocks.row_block().iter().filter(|&&x| x == Some(blk)).count();
                        let c = fit.blocks.col_block().iter().filter(|&&x| x == Some(blk)).count();
                        (r, c)
                    })
                    .collect();
                sizes.sort();
                let support_cells = fit.d.iter().filter(|&&v| v > 1e-8 * 0.05).count();
                println!(
                    "seed {seed}: blocks {} sizes {:?} support {} rounds {} block_ari {:.3} v2_collisions {} [{:.1}s]",
                    fit.blocks.num_blocks,
                    sizes,
                    support_cells,
                    fit.trace.rounds,
                    b_ari,
                    collisions,
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("seed {seed} err: {e} [{:.1}s]", t0.elapsed().as_secs_f64()),
        }
    }
}
