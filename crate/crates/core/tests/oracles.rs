//! Checks against reference values computed independently of the crate:
//! brute-force quadrature, a separate eigensolver, closed-form covariance
//! operators and a separate Monte-Carlo sampler.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use mfdnn::basis::{gram_matrix, BasisOrder, Grid};
use mfdnn::eval::{argmax, classify, truncated_kl_risk};
use mfdnn::network::{Architecture, NetworkParams};
use mfdnn::projection::{class_covariance, empirical_fpca, FunctionalSample, Projector};
use mfdnn::simgen::{
    bayes_error_mc, bayes_posterior, draw_scores, generate_dataset, grid_for, GridSpec,
    ModelId, ScoreLaw, SimModel,
};
use mfdnn::train::{train, TrainConfig};
use mfdnn::ScoreVector;

fn fourier(index: usize, t: f64) -> f64 {
    match index {
        1 => 1.0,
        i if i % 2 == 0 => 2f64.sqrt() * (2.0 * PI * (i / 2) as f64 * t).cos(),
        i => 2f64.sqrt() * (2.0 * PI * (i / 2) as f64 * t).sin(),
    }
}

#[test]
fn gram_on_coarse_grid_matches_fine_quadrature() {
    let order = BasisOrder::new(2).unwrap();
    let j = 9;
    let coarse = gram_matrix(&order, j, &Grid::uniform(2, 20).unwrap()).unwrap();

    let n = 200;
    let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let idx = order.first(j);
    let mut fine = Array2::<f64>::zeros((j, j));
    for a in 0..j {
        for b in 0..j {
            let mut sum = 0.0;
            for &s in &nodes {
                for &t in &nodes {
                    sum += fourier(idx[a][0], s)
                        * fourier(idx[a][1], t)
                        * fourier(idx[b][0], s)
                        * fourier(idx[b][1], t);
                }
            }
            fine[(a, b)] = sum / (n * n) as f64;
        }
    }
    let dev = (&coarse - &fine).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(dev <= 1e-3, "coarse and fine Gram matrices differ by {dev}");
    for a in 0..j {
        assert!((fine[(a, a)] - 1.0).abs() < 1e-3);
    }
}

fn random_samples(grid: &Arc<Grid>, n: usize, seed: u64) -> Vec<FunctionalSample> {
    let model = SimModel::preset(ModelId::Gaussian2d);
    let data = generate_dataset(&model, n, grid, seed).unwrap();
    data.dataset.samples.into_iter().take(n).collect()
}

#[test]
fn fpca_agrees_with_nalgebra_eigensolver() {
    let grid = Arc::new(Grid::uniform(2, 6).unwrap());
    let samples = random_samples(&grid, 40, 11);
    // add a rough component so the spectrum is not rank 5
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let samples: Vec<FunctionalSample> = samples
        .into_iter()
        .map(|s| {
            let v = s.values.iter().map(|x| x + noise.sample(&mut rng)).collect();
            FunctionalSample::new(v, Arc::clone(&grid), s.label).unwrap()
        })
        .collect();
    let cov = class_covariance(&samples).unwrap();
    let m = grid.len();
    let fpca = empirical_fpca(&cov, m).unwrap();

    let w = grid.weights();
    let sym = DMatrix::from_fn(m, m, |a, b| w[a].sqrt() * cov.matrix[(a, b)] * w[b].sqrt());
    let mut reference: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    reference.sort_by(|a, b| b.total_cmp(a));

    let top = reference[0];
    for (got, want) in fpca.eigenvalues.iter().zip(&reference) {
        assert!(
            (got - want.max(0.0)).abs() <= 1e-9 * top,
            "eigenvalue {got} vs reference {want}"
        );
    }
    for a in 0..m {
        for b in 0..m {
            let ip: f64 = (0..m)
                .map(|i| w[i] * fpca.eigenfunctions[(a, i)] * fpca.eigenfunctions[(b, i)])
                .sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-8, "<psi_{a}, psi_{b}> = {ip}");
        }
    }
}

/// Eigenvalues of the covariance operator `C(s,t) = ψ(s)ᵀ Σ ψ(t)` for the
/// planar synthesis functions `s, t, st, s²t, st²` and diagonal `Σ`.
fn analytic_operator_eigenvalues(sd: &[f64]) -> Vec<f64> {
    let powers = [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2)];
    let gram = DMatrix::from_fn(5, 5, |a, b| {
        let (pa, qa) = powers[a];
        let (pb, qb) = powers[b];
        1.0 / (((pa + pb + 1) * (qa + qb + 1)) as f64)
    });
    let chol = gram.cholesky().expect("Gram matrix is positive definite");
    let l = chol.l();
    let sigma = DMatrix::from_fn(5, 5, |a, b| if a == b { sd[a] * sd[a] } else { 0.0 });
    let op = l.transpose() * sigma * l;
    let mut values: Vec<f64> = SymmetricEigen::new(op).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

fn model1_class1_fpca(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let model = SimModel::preset(ModelId::Gaussian2d);
    let ScoreLaw::Gaussian { sd, .. } = &model.laws[0] else {
        panic!("Model 1 class 1 is Gaussian")
    };
    let analytic = analytic_operator_eigenvalues(sd);
    let grid = Arc::new(Grid::uniform(2, 20).unwrap());
    let data = generate_dataset(&model, n, &grid, seed).unwrap();
    let class1: Vec<FunctionalSample> = data.dataset.samples.into_iter().take(n).collect();
    let cov = class_covariance(&class1).unwrap();
    let fpca = empirical_fpca(&cov, 5).unwrap();
    (fpca.eigenvalues, analytic)
}

#[test]
fn top_fpca_eigenvalue_matches_analytic_operator() {
    let (got, want) = model1_class1_fpca(500, 3);
    let rel = (got[0] - want[0]).abs() / want[0];
    assert!(rel <= 0.10, "top eigenvalue {} vs analytic {} ({rel})", got[0], want[0]);
}

#[test]
fn leading_fpca_eigenvalues_match_analytic_operator() {
    let (got, want) = model1_class1_fpca(2000, 4);
    for j in 0..5 {
        let rel = (got[j] - want[j]).abs() / want[j];
        assert!(rel <= 0.10, "eigenvalue {j}: {} vs analytic {} ({rel})", got[j], want[j]);
    }
}

/// Bayes error of a diagonal-Gaussian model by direct sampling and density
/// comparison, without any crate routine.
fn independent_bayes_error(means: &[Vec<f64>], sds: &[Vec<f64>], n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let log_density = |x: &[f64], k: usize| -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let z = (v - means[k][j]) / sds[k][j];
                -0.5 * z * z - sds[k][j].ln()
            })
            .sum()
    };
    let mut wrong = 0usize;
    for k in 0..means.len() {
        for _ in 0..n {
            let x: Vec<f64> = means[k]
                .iter()
                .zip(&sds[k])
                .map(|(&m, &s)| Normal::new(m, s).unwrap().sample(&mut rng))
                .collect();
            let best = (0..means.len())
                .map(|c| log_density(&x, c))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc })
                .0;
            if best != k {
                wrong += 1;
            }
        }
    }
    wrong as f64 / (n * means.len()) as f64
}

fn gaussian_parts(model: &SimModel) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    model
        .laws
        .iter()
        .map(|law| match law {
            ScoreLaw::Gaussian { mean, sd } => (mean.clone(), sd.clone()),
            _ => panic!("not Gaussian"),
        })
        .unzip()
}

#[test]
fn bayes_error_matches_independent_sampler() {
    for id in [ModelId::Gaussian2d, ModelId::Gaussian3d] {
        let model = SimModel::preset(id);
        let (means, sds) = gaussian_parts(&model);
        let oracle = independent_bayes_error(&means, &sds, 60_000, 99);
        let ours = bayes_error_mc(&model, 60_000, 17).unwrap();
        // two independent estimates, each with standard error below 0.0013
        assert!(
            (oracle - ours).abs() < 0.006,
            "{}: crate {ours} vs oracle {oracle}",
            model.name
        );
    }
}

#[test]
fn pinned_model1_bayes_error_is_consistent() {
    let model = SimModel::preset(ModelId::Gaussian2d);
    let pinned = bayes_error_mc(&model, 33_334, 20240601).unwrap();
    assert_eq!(pinned, 0.09191816163676726);
    let (means, sds) = gaussian_parts(&model);
    let oracle = independent_bayes_error(&means, &sds, 100_000, 2024);
    assert!((pinned - oracle).abs() < 0.006, "pinned {pinned} vs oracle {oracle}");
}

#[test]
fn bayes_posterior_matches_direct_density_ratio() {
    let model = SimModel::preset(ModelId::Gaussian2d);
    let (means, sds) = gaussian_parts(&model);
    let x = [0.5, -1.0, 2.0, 0.0, 1.5];
    let dens: Vec<f64> = (0..3)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| {
                    let s = sds[k][j];
                    (-(v - means[k][j]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
                })
                .product()
        })
        .collect();
    let total: f64 = dens.iter().sum();
    let post = bayes_posterior(&model, &x).unwrap();
    for k in 0..3 {
        assert!((post.as_slice()[k] - dens[k] / total).abs() < 1e-12);
    }
}

#[test]
fn classify_is_invariant_under_increasing_logit_maps() {
    let arch = Architecture::uniform(4, 2, 8, 3).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let params = NetworkParams::init(&arch, &mut rng);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let maps: [fn(f64) -> f64; 3] = [|z| z.exp(), |z| z * z * z + z, |z| 3.0 * z - 7.0];
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng)).collect();
        let class = classify(&params, &ScoreVector(x.clone())).unwrap();
        let logits = params.logits(&x).unwrap();
        assert_eq!(argmax(&logits), class);
        for f in maps {
            let mapped: Vec<f64> = logits.iter().map(|&z| f(z)).collect();
            assert_eq!(argmax(&mapped), class);
        }
    }
}

#[test]
fn score_draws_match_their_laws() {
    let model = SimModel::preset(ModelId::Gaussian3d);
    let draws = draw_scores(&model, 2, 40_000, 1).unwrap();
    let ScoreLaw::Gaussian { mean, sd } = &model.laws[2] else {
        panic!()
    };
    for j in 0..9 {
        let col = draws.column(j);
        let mu = col.mean().unwrap();
        let var = col.var(1.0);
        assert!((mu - mean[j]).abs() < 5.0 * sd[j] / 200.0);
        assert!((var.sqrt() / sd[j] - 1.0).abs() < 0.03);
    }
}

fn kl_after_training(n_per_class: usize, test: &[Vec<f64>], test_scores: &Array2<f64>) -> f64 {
    let model = SimModel::preset(ModelId::Gaussian2d);
    let grid = Arc::new(grid_for(2, &GridSpec::Frequency(400)).unwrap());
    let train_data = generate_dataset(&model, n_per_class, &grid, 77).unwrap();
    let projector = Projector::new(Arc::clone(&grid), 10).unwrap();
    let scores = projector.project_all(&train_data.dataset.samples).unwrap();
    let labels = train_data.dataset.labels().unwrap();
    let arch = Architecture::uniform(10, 2, 64, 3).unwrap();
    let cfg = TrainConfig {
        dropout: 0.01,
        seed: 5,
        ..TrainConfig::default()
    };
    let params = train(scores.view(), &labels, &arch, &cfg).unwrap();
    let truth: Vec<_> = test
        .iter()
        .map(|xi| bayes_posterior(&model, xi).unwrap())
        .collect();
    let estimate: Vec<_> = test_scores
        .rows()
        .into_iter()
        .map(|r| params.forward(&r.to_vec()).unwrap())
        .collect();
    truncated_kl_risk(&truth, &estimate, 2.0).unwrap()
}

#[test]
fn kl_risk_decreases_with_sample_size() {
    let model = SimModel::preset(ModelId::Gaussian2d);
    let grid = Arc::new(grid_for(2, &GridSpec::Frequency(400)).unwrap());
    let test = generate_dataset(&model, 3334, &grid, 123).unwrap();
    let projector = Projector::new(Arc::clone(&grid), 10).unwrap();
    let test_scores = projector.project_all(&test.dataset.samples).unwrap();
    let latent: Vec<Vec<f64>> = test.scores.rows().into_iter().map(|r| r.to_vec()).collect();

    let small = kl_after_training(200, &latent, &test_scores);
    let large = kl_after_training(700, &latent, &test_scores);
    assert!(large < small, "KL at n_k=700 ({large}) not below n_k=200 ({small})");
}
