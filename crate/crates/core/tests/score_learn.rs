mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use redpc::deepc::{prox_score, score, TrajectorySegment};
use redpc::plant::{DataMatrix, Layout};
use redpc::score::{
    backward_batch, build_dataset, evaluate_loss, forward_batch, init_params, prox_hat_backward, prox_hat_forward,
    prox_hat_forward_cached, score_hat, train, DatasetConfig, InitMode, InitSource, Projector, ProxDataset,
    ScoringModelParams, TrainConfig,
};
use redpc::solver::SolverSettings;

fn embedded(data: &DataMatrix, k: usize) -> ScoringModelParams {
    let l = data.layout;
    let reg = common::small_reg();
    let src = InitSource { data, reg: &reg };
    init_params(data.cols() + l.p * l.t_ini, l.dim(), l, k, InitMode::Embedding, 0, Some(src)).unwrap()
}

fn tiny(seed: u64, k: usize) -> ScoringModelParams {
    init_params(6, 3, Layout::new(1, 1, 1, 1), k, InitMode::Random, seed, None).unwrap()
}

fn oracle() -> SolverSettings {
    SolverSettings::oracle().with_tol(1e-11).with_max_iter(200_000)
}

#[test]
fn embedding_weights_come_from_the_regularizer() {
    let data = common::small_data(0);
    let p = embedded(&data, 10);
    let (m, ns) = (data.cols(), 2);
    assert_eq!((p.n_z(), p.m_z()), (m + ns, 12));
    assert!(p.d1.rows(0, m).iter().all(|&v| v == 0.1));
    assert!(p.d1.rows(m, ns).iter().all(|&v| v == 1.0));
    assert!(p.d2.rows(0, m).iter().all(|&v| v == 1.0));
    assert!(p.d2.rows(m, ns).iter().all(|&v| (v - 10f64.sqrt()).abs() < 1e-15));
    assert_eq!(p.w, -DMatrix::<f64>::identity(12, 12));
    assert_eq!(p.g.columns(0, m), data.h.columns(0, m));
    // Too small a latent space cannot hold the embedding.
    let reg = common::small_reg();
    let src = InitSource { data: &data, reg: &reg };
    assert!(init_params(m, 12, data.layout, 10, InitMode::Embedding, 0, Some(src)).is_err());
}

#[test]
fn random_init_is_seeded() {
    assert_eq!(tiny(3, 5), tiny(3, 5));
    assert_ne!(tiny(3, 5), tiny(4, 5));
    let p = tiny(3, 5);
    assert!(p.d1.iter().chain(p.d2.iter()).all(|&v| v >= 0.0));
}

#[test]
fn long_unroll_of_the_embedding_matches_the_exact_prox() {
    let data = common::small_data(1);
    let params = embedded(&data, 2000);
    let mut rng = common::rng(2);
    for _ in 0..5 {
        let tau = TrajectorySegment::new(data.layout, common::gaussian_vec(&mut rng, 12, 1.0)).unwrap();
        let (hat, _) = prox_hat_forward(&params, &tau, None).unwrap();
        let exact = prox_score(&data, &common::small_reg(), &tau, &oracle()).unwrap();
        let err = (&hat.data - &exact.data).norm() / exact.data.norm().max(1e-12);
        assert!(err <= 1e-4, "relative error {err}");
    }
}

#[test]
fn unroll_error_shrinks_with_depth() {
    let data = common::small_data(1);
    let mut rng = common::rng(3);
    let tau = TrajectorySegment::new(data.layout, common::gaussian_vec(&mut rng, 12, 1.0)).unwrap();
    let exact = prox_score(&data, &common::small_reg(), &tau, &oracle()).unwrap();
    let errs: Vec<f64> = [10, 50, 200, 1000]
        .iter()
        .map(|&k| (prox_hat_forward(&embedded(&data, k), &tau, None).unwrap().0.data - &exact.data).norm())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{errs:?}");
    assert!(errs[3] < 1e-3 * errs[0].max(1e-12) || errs[3] < 1e-8);
}

#[test]
fn scoring_without_weights_projects_onto_the_feasible_set() {
    let mut p = tiny(7, 600);
    p.d1.fill(0.0);
    p.d2.fill(0.0);
    let mut rng = common::rng(7);
    let tau = TrajectorySegment::new(p.layout, common::gaussian_vec(&mut rng, 4, 1.0)).unwrap();
    let (hat, _) = prox_hat_forward(&p, &tau, None).unwrap();
    // Feasible means W τ̂ ∈ range(G).
    let wt = &p.w * &hat.data;
    let g = &p.g;
    let coef = g.clone().svd(true, true).solve(&wt, 1e-12).unwrap();
    assert!((g * coef - wt).norm() <= 1e-6);
}

#[test]
fn zero_segment_maps_to_zero() {
    let p = tiny(1, 20);
    let (hat, _) = prox_hat_forward(&p, &TrajectorySegment::zeros(p.layout), None).unwrap();
    assert!(hat.data.iter().all(|&v| v == 0.0));
}

#[test]
fn cached_projector_gives_identical_output() {
    let p = tiny(2, 30);
    let tau = TrajectorySegment::new(p.layout, DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5])).unwrap();
    let (a, _) = prox_hat_forward(&p, &tau, None).unwrap();
    let (b, _) = prox_hat_forward_cached(&p, Arc::new(Projector::new(&p).unwrap()), &tau, None).unwrap();
    assert_eq!(a.data, b.data);
}

#[test]
fn reverse_pass_is_linear_in_the_cotangent() {
    let p = tiny(5, 15);
    let tau = TrajectorySegment::new(p.layout, DVector::from_vec(vec![1.0, -2.0, 0.7, 0.1])).unwrap();
    let (_, tape) = prox_hat_forward(&p, &tau, None).unwrap();
    let zero = prox_hat_backward(&tape, &DVector::zeros(4), &p).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
    let c = DVector::from_vec(vec![0.5, 1.0, -0.25, 2.0]);
    let one = prox_hat_backward(&tape, &c, &p).unwrap();
    let mut two = prox_hat_backward(&tape, &(&c * 2.0), &p).unwrap();
    two.scale(0.5);
    assert!((&one.g - &two.g).amax() <= 1e-12 * (1.0 + one.g.amax()));
    assert!((&one.w - &two.w).amax() <= 1e-12 * (1.0 + one.w.amax()));
    assert!((&one.d1 - &two.d1).amax() <= 1e-12 * (1.0 + one.d1.amax()));
    assert!((&one.d2 - &two.d2).amax() <= 1e-12 * (1.0 + one.d2.amax()));
}

fn half_sq_loss(p: &ScoringModelParams, tau: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    let tape = forward_batch(p, Arc::new(Projector::new(p).unwrap()), tau, None).unwrap();
    0.5 * (tape.output() - target).norm_squared()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Central differences on `½‖Prox̂(τ) − t‖²` for every parameter block.
    #[test]
    fn reverse_pass_matches_finite_differences(seed in 0u64..100_000) {
        let p = tiny(seed, 8);
        let mut rng = common::rng(seed ^ 0x5eed);
        let tau = DMatrix::from_fn(4, 3, |_, _| common::gaussian_vec(&mut rng, 1, 1.0)[0]);
        let target = DMatrix::from_fn(4, 3, |_, _| common::gaussian_vec(&mut rng, 1, 1.0)[0]);
        let tape = forward_batch(&p, Arc::new(Projector::new(&p).unwrap()), &tau, None).unwrap();
        let grads = backward_batch(&p, &tape, &(tape.output() - &target)).unwrap();
        let analytic = [grads.d1.as_slice().to_vec(), grads.d2.as_slice().to_vec(), grads.g.as_slice().to_vec(), grads.w.as_slice().to_vec()];
        let h = 1e-6;
        for (block, exact) in analytic.iter().enumerate() {
            let mut fd = vec![0.0; exact.len()];
            for (i, slot) in fd.iter_mut().enumerate() {
                let mut plus = p.clone();
                plus.blocks_mut()[block][i] += h;
                let mut minus = p.clone();
                minus.blocks_mut()[block][i] -= h;
                *slot = (half_sq_loss(&plus, &tau, &target) - half_sq_loss(&minus, &tau, &target)) / (2.0 * h);
            }
            let scale = exact.iter().fold(1e-3f64, |a, v| a.max(v.abs()));
            let err = exact.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            // Skip draws that straddle a soft-threshold kink.
            prop_assume!(err / scale < 1e-2);
            prop_assert!(err / scale <= 1e-5, "block {}: {}", block, err / scale);
        }
    }

    #[test]
    fn learned_score_of_the_embedding_equals_the_true_score(seed in 0u64..10_000) {
        let data = common::small_data(6);
        let p = embedded(&data, 1);
        let mut rng = common::rng(seed);
        let tau = common::tau_in_range(&data, &mut rng);
        let a = score_hat(&p, &tau, &oracle()).unwrap();
        let b = score(&data, &common::small_reg(), &tau, &oracle()).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{} vs {}", a, b);
    }
}

fn small_dataset(noise: f64, n: usize, seed: u64) -> (DataMatrix, ProxDataset) {
    let data = common::small_data(8);
    let cfg = DatasetConfig {
        n_samples: n,
        noise_scale: noise,
        ..DatasetConfig::default()
    };
    let ds = build_dataset(&data, &common::small_reg(), &cfg, seed).unwrap();
    (data, ds)
}

#[test]
fn dataset_split_and_raw_columns() {
    let (data, ds) = small_dataset(0.0, 100, 1);
    assert_eq!((ds.len(), ds.n_train, ds.n_validation()), (100, 90, 10));
    assert_eq!(ds.meta.raw_columns, data.cols());
    for j in 0..data.cols() {
        let col = data.h.column(j);
        assert!((0..ds.len()).any(|s| ds.taus.column(s) == col), "column {j} missing");
    }
    let (_, again) = small_dataset(0.0, 100, 1);
    assert_eq!(ds.taus, again.taus);
    assert_eq!(ds.targets, again.targets);
    let (_, other) = small_dataset(0.0, 100, 2);
    assert_ne!(ds.taus, other.taus);
    // Targets are exact proxes of the inputs.
    let (tau, target) = ds.pair(17);
    let exact = prox_score(&data, &common::small_reg(), &tau, &oracle()).unwrap();
    assert!((exact.data - target.data).amax() <= 1e-5);
}

#[test]
fn embedding_starts_near_the_optimum() {
    let (data, ds) = small_dataset(0.1, 60, 3);
    let all: Vec<usize> = (0..ds.len()).collect();
    let embedded = evaluate_loss(&embedded(&data, 200), &ds, &all, 16).unwrap();
    let random = init_params(data.cols() + 2, 12, data.layout, 200, InitMode::Random, 0, None).unwrap();
    let random = evaluate_loss(&random, &ds, &all, 16).unwrap();
    assert!(embedded < 1e-3 * random, "{embedded} vs {random}");
}

#[test]
fn training_fits_a_single_pair() {
    let p = tiny(11, 10);
    let tau = DMatrix::from_column_slice(4, 1, &[1.0, -0.5, 0.25, 2.0]);
    let target = DMatrix::from_column_slice(4, 1, &[0.2, 0.1, -0.3, 0.4]);
    let ds = ProxDataset::from_pairs(p.layout, tau, target).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        epochs: 400,
        patience: 400,
        ..TrainConfig::default()
    };
    let out = train(&p, &ds, &cfg).unwrap();
    let first = out.curve[0].train_loss;
    let best = out.curve[out.best_epoch].best_loss;
    assert!(best <= 1e-2 * first, "{first} -> {best}");
    assert!(out.curve.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let p = tiny(12, 10);
    let ds = ProxDataset::from_pairs(p.layout, DMatrix::from_element(4, 3, 0.5), DMatrix::from_element(4, 3, 0.1)).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(&p, &ds, &cfg).unwrap();
    assert_eq!(out.params, p);
    assert_eq!(out.best_epoch, 0);
}
