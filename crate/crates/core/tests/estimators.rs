//! Statistical and algebraic properties of the estimators, checked against
//! finite differences, quadrature and each other.

use n2ce::analysis::{gradient_variance, population_n2ce_gradient};
use n2ce::objectives::{
    divergence_offset, n2ce_gradient, n2ce_objective, nce_objective, neg_reweight_gradient, neg_reweight_objective,
    nwj_gradient, nwj_objective, sigmoid_form_gradient, sigmoid_form_objective, weight_fn,
};
use n2ce::{rng, GaussianLocationModel, MlpConfig, MlpRatioModel, RatioModel};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

fn batch(seed: u64, n: usize, mean: &[f64]) -> Array2<f64> {
    rng::standard_normal(&mut rng::seeded(seed), n, mean.len()) + &Array1::from(mean.to_vec())
}

/// Central differences of `objective` at `params`, one coordinate at a time.
fn fd_gradient(params: &[f64], h: f64, mut objective: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|k| {
            p[k] = params[k] + h;
            let up = objective(&p);
            p[k] = params[k] - h;
            let down = objective(&p);
            p[k] = params[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn n2ce_gradient_is_unbiased_for_the_population_gradient() {
    let alpha = array![-0.5, 0.3];
    let target = array![1.0, -0.5];
    let model = GaussianLocationModel::new(alpha.clone()).unwrap();
    for (i, m) in [1.0, 10.0, 100.0].into_iter().enumerate() {
        let exact = population_n2ce_gradient(alpha.view(), target.view(), m).unwrap();
        let mut stream = rng::derive(11, &[i as u64]);
        let draws: Vec<Array1<f64>> = (0..400)
            .map(|_| {
                let pos = rng::standard_normal(&mut stream, 200, 2) + &target;
                let neg = rng::standard_normal(&mut stream, 200, 2);
                n2ce_gradient(&model, pos.view(), neg.view(), m).unwrap().vector
            })
            .collect();
        for k in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|g| g[k]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
            let se = sd / (xs.len() as f64).sqrt();
            assert!((mean - exact[k]).abs() <= 4.0 * se, "M={m} k={k}: {mean} vs {} (se {se})", exact[k]);
        }
    }
}

#[test]
fn population_gradient_tends_to_the_mle_gradient() {
    let alpha = array![-0.5, 0.3];
    let target = array![1.0, -0.5];
    let mle = &target - &alpha;
    let err = |m: f64| {
        let g = population_n2ce_gradient(alpha.view(), target.view(), m).unwrap();
        (&g - &mle).mapv(|v| v * v).sum().sqrt()
    };
    let errs: Vec<f64> = [1.0, 10.0, 100.0, 1e4, 1e8].iter().map(|&m| err(m)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[4] < 1e-6, "{errs:?}");
}

#[test]
fn gradient_variance_grows_with_m() {
    let alpha = array![-2.0, 1.0];
    let target = array![1.5, -0.8];
    let v: Vec<f64> =
        [1.0, 10.0, 100.0, 1000.0].iter().map(|&m| gradient_variance(alpha.view(), target.view(), m, 100, 300, 4).unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let cfg = MlpConfig { input_dim: 3, hidden_width: 6, num_resblocks: 2, num_stages: 2 };
    let mut model = MlpRatioModel::init(cfg, &mut rng::seeded(2)).unwrap();
    let pos = batch(3, 20, &[0.5, -0.5, 1.0]);
    let neg = batch(4, 30, &[0.0, 0.0, 0.0]);
    let base = model.params().to_vec();
    for stage in 0..2 {
        for m in [1.0, 50.0] {
            let g = n2ce_gradient(&model.at_stage(stage).unwrap(), pos.view(), neg.view(), m).unwrap().vector;
            let fd = fd_gradient(&base, 1e-6, |p| {
                model.set_params(Array1::from(p.to_vec())).unwrap();
                n2ce_objective(&model.at_stage(stage).unwrap(), pos.view(), neg.view(), m).unwrap()
            });
            model.set_params(Array1::from(base.clone())).unwrap();
            for (k, (a, b)) in g.iter().zip(&fd).enumerate() {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
                assert!(rel <= 1e-4, "stage {stage} M={m} coord {k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn mlp_input_gradient_matches_finite_differences() {
    let cfg = MlpConfig { input_dim: 2, hidden_width: 8, num_resblocks: 1, num_stages: 3 };
    let model = MlpRatioModel::init(cfg, &mut rng::seeded(8)).unwrap();
    let z = array![[0.4, -1.3], [2.0, 0.1]];
    let (_, g) = model.input_grad_batch(z.view(), 1).unwrap();
    for i in 0..2 {
        let fd = fd_gradient(&[z[[i, 0]], z[[i, 1]]], 1e-6, |p| model.forward(ndarray::aview1(p), 1).unwrap());
        for k in 0..2 {
            assert!((g[[i, k]] - fd[k]).abs() <= 1e-6 * (1.0 + fd[k].abs()), "{} vs {}", g[[i, k]], fd[k]);
        }
    }
}

fn small_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_magnitude_is_nce(alpha in small_vec(), shift in small_vec(), seed in 0u64..1000) {
        let model = GaussianLocationModel::from_slice(&alpha).unwrap();
        let pos = batch(seed, 40, &shift);
        let neg = batch(seed + 1, 40, &[0.0, 0.0]);
        let a = n2ce_objective(&model, pos.view(), neg.view(), 1.0).unwrap();
        let b = nce_objective(&model, pos.view(), neg.view()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn sigmoid_form_agrees(alpha in small_vec(), log_m in 0.0f64..20.0, seed in 0u64..1000) {
        let model = GaussianLocationModel::from_slice(&alpha).unwrap();
        let pos = batch(seed, 30, &[1.0, -1.0]);
        let neg = batch(seed + 7, 50, &[0.0, 0.0]);
        let m = log_m.exp();
        let a = n2ce_objective(&model, pos.view(), neg.view(), m).unwrap();
        let b = sigmoid_form_objective(&model, pos.view(), neg.view(), m).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        let ga = n2ce_gradient(&model, pos.view(), neg.view(), m).unwrap().vector;
        let gb = sigmoid_form_gradient(&model, pos.view(), neg.view(), m).unwrap().vector;
        prop_assert!((&ga - &gb).iter().all(|d| d.abs() <= 1e-10 * (1.0 + ga.iter().map(|v| v.abs()).sum::<f64>())));
    }

    #[test]
    fn gaussian_gradients_match_finite_differences(alpha in small_vec(), log_m in 0.0f64..9.0, seed in 0u64..1000) {
        let pos = batch(seed, 25, &[0.8, 0.2]);
        let neg = batch(seed + 3, 35, &[0.0, 0.0]);
        let m = log_m.exp();
        let model = GaussianLocationModel::from_slice(&alpha).unwrap();
        type Pair = (
            fn(&GaussianLocationModel, ndarray::ArrayView2<'_, f64>, ndarray::ArrayView2<'_, f64>, f64) -> n2ce::Result<f64>,
            fn(&GaussianLocationModel, ndarray::ArrayView2<'_, f64>, ndarray::ArrayView2<'_, f64>, f64) -> n2ce::Result<n2ce::GradEstimate>,
        );
        let pairs: [Pair; 3] = [
            (n2ce_objective, n2ce_gradient),
            (neg_reweight_objective, neg_reweight_gradient),
            (sigmoid_form_objective, sigmoid_form_gradient),
        ];
        for (obj, grad) in pairs {
            let g = grad(&model, pos.view(), neg.view(), m).unwrap().vector;
            let fd = fd_gradient(&alpha, 1e-5, |p| obj(&GaussianLocationModel::from_slice(p).unwrap(), pos.view(), neg.view(), m).unwrap());
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0), "{a} vs {b}");
            }
        }
        let g = nwj_gradient(&model, pos.view(), neg.view(), 30.0).unwrap().vector;
        let fd = fd_gradient(&alpha, 1e-5, |p| nwj_objective(&GaussianLocationModel::from_slice(p).unwrap(), pos.view(), neg.view(), 30.0).unwrap());
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0));
        }
    }

    #[test]
    fn weight_is_a_probability(log_m in -10.0f64..30.0, f in -30.0f64..30.0) {
        let (m, r) = (log_m.exp(), f.exp());
        let w = weight_fn(m, r).unwrap();
        // Rounds to exactly 1 once r/M drops below machine epsilon.
        prop_assert!(w > 0.0 && w <= 1.0);
        prop_assert!((w - 1.0 / (1.0 + r / m)).abs() <= 1e-15);
    }

    #[test]
    fn offset_is_increasing_and_bounded(log_m in -5.0f64..25.0) {
        let m = log_m.exp();
        let c = divergence_offset(m).unwrap();
        prop_assert!(c > 0.0 && c <= m.ln_1p() + 1.0 + 1e-12);
        prop_assert!(divergence_offset(m * 1.5).unwrap() > c);
    }

    #[test]
    fn objective_is_maximized_near_the_true_ratio(shift in small_vec(), log_m in 0.0f64..7.0) {
        // With many samples the true parameters beat a perturbed model.
        let pos = batch(1, 20_000, &shift);
        let neg = batch(2, 20_000, &[0.0, 0.0]);
        let m = log_m.exp();
        let truth = GaussianLocationModel::from_slice(&shift).unwrap();
        let off = GaussianLocationModel::from_slice(&[shift[0] + 0.5, shift[1] - 0.5]).unwrap();
        prop_assert!(n2ce_objective(&truth, pos.view(), neg.view(), m).unwrap() > n2ce_objective(&off, pos.view(), neg.view(), m).unwrap());
    }

    #[test]
    fn mlp_forward_is_finite_and_matches_batch(z in prop::collection::vec(-50.0f64..50.0, 2), stage in 0usize..3) {
        let cfg = MlpConfig { input_dim: 2, hidden_width: 8, num_resblocks: 2, num_stages: 3 };
        let model = MlpRatioModel::init(cfg, &mut rng::seeded(4)).unwrap();
        let single = model.forward(ndarray::aview1(&z), stage).unwrap();
        let batch = model.forward_batch(Array2::from_shape_vec((1, 2), z.clone()).unwrap().view(), stage).unwrap();
        prop_assert!(single.is_finite());
        prop_assert!((single - batch[0]).abs() <= 1e-12 * (1.0 + single.abs()));
        let staged = model.at_stage(stage).unwrap();
        prop_assert_eq!(staged.log_ratio(Array2::from_shape_vec((1, 2), z).unwrap().view()).unwrap()[0], batch[0]);
    }
}
