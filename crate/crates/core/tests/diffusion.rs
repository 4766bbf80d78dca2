mod common;

use common::oracles::{ExactEps, Fixed, NanEps, RecordedEps, ZeroEps};
use lqsynth_core::diffusion::{
    diffuse_from_initial_lq, forward_diffuse, linear_schedule, posterior_step, predict_x0,
    predict_x0_unclamped, reverse_chain, train_step, DiffusionConfig, DiffusionError,
    NoiseSchedule,
};
use lqsynth_core::io::procedural_set;
use lqsynth_core::metrics::{fit_stats, frechet_distance, psnr};
use lqsynth_core::tensor::{randn, Adam, AdamConfig, Dims, Rng, Tensor};
use lqsynth_core::Image;
use proptest::prelude::*;

fn default_sched() -> NoiseSchedule {
    DiffusionConfig::default().schedule().unwrap()
}

/// β_t straight from the endpoint definition.
fn beta_oracle(t: usize) -> f64 {
    1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / 999.0
}

// ---------- schedule ----------

#[test]
fn first_alpha_bar_is_one_minus_beta1() {
    assert!((default_sched().alpha_bar(1) - 0.9999).abs() < 1e-15);
}

#[test]
fn alpha_bar_matches_running_product() {
    let s = default_sched();
    let mut prod = 1.0f64;
    for t in 1..=1000 {
        prod *= 1.0 - beta_oracle(t);
        assert!((s.alpha_bar(t) - prod).abs() < 1e-12, "t={t}");
    }
    assert!(((1.0 - 1e-4) * (1.0 - beta_oracle(2)) - s.alpha_bar(2)).abs() < 1e-12);
    assert!(s.alpha_bar(1000) < 1e-4);
}

#[test]
fn schedule_invariants() {
    let s = default_sched();
    assert_eq!(s.alpha_bar(0), 1.0);
    assert_eq!(s.posterior_variance(1), 0.0);
    for t in 1..=1000 {
        assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
        assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        assert!((s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() < 1e-12);
        assert!(s.posterior_variance(t) >= 0.0);
    }
    assert!(s.alpha_bar(1000) < 0.01);
}

#[test]
fn invalid_schedules_are_rejected() {
    assert!(matches!(linear_schedule(1000, 0.02, 1e-4), Err(DiffusionError::Schedule(_))));
    assert!(linear_schedule(1000, 0.0, 0.02).is_err());
    assert!(linear_schedule(1000, 1e-4, 1.0).is_err());
    assert!(linear_schedule(0, 1e-4, 0.02).is_err());
    let cfg = DiffusionConfig {
        t_max_face: 2000,
        ..DiffusionConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn posterior_moments_match_bayes_product() {
    // q(x_{t−1}|x0)·q(x_t|x_{t−1}) normalized: precision-weighted combination.
    let s = default_sched();
    let x0 = Tensor::from_vec(Dims::new(1, 1, 1, 3), vec![0.7, -0.4, 0.1]).unwrap();
    let xt = Tensor::from_vec(Dims::new(1, 1, 1, 3), vec![-0.2, 0.9, 1.3]).unwrap();
    for t in [2, 3, 10, 100, 500, 999, 1000] {
        let (ab_prev, a, b) = (s.alpha_bar(t - 1), s.alpha(t), s.beta(t));
        let precision = 1.0 / (1.0 - ab_prev) + a / b;
        let var = 1.0 / precision;
        assert!((s.posterior_variance(t) - var).abs() <= 1e-12 * var.max(1e-12), "t={t}");
        let out = posterior_step(&xt, t, &x0, None, &s).unwrap();
        for i in 0..3 {
            let (p, q) = (x0.data()[i] as f64, xt.data()[i] as f64);
            let mean = var * (ab_prev.sqrt() * p / (1.0 - ab_prev) + a.sqrt() * q / b);
            assert!((out.data()[i] as f64 - mean).abs() < 1e-5, "t={t}");
        }
    }
}

// ---------- forward ----------

#[test]
fn zero_noise_scales_the_input() {
    let s = default_sched();
    let x0 = randn::<f32>(&mut Rng::new(1, 0), Dims::new(2, 3, 4, 4));
    let out = forward_diffuse(&x0, 300, &Tensor::zeros(x0.dims()), &s).unwrap();
    let k = s.sqrt_alpha_bar(300);
    for (o, x) in out.data().iter().zip(x0.data()) {
        assert_eq!(*o, (k * *x as f64) as f32);
    }
}

#[test]
fn step_zero_is_identity() {
    let s = default_sched();
    let mut rng = Rng::new(2, 0);
    let x0 = randn::<f32>(&mut rng, Dims::new(1, 3, 8, 8));
    let eps = randn::<f32>(&mut rng, x0.dims());
    assert_eq!(forward_diffuse(&x0, 0, &eps, &s).unwrap(), x0);
    let (x_t, _) = diffuse_from_initial_lq(&x0, 0, &mut rng, &s).unwrap();
    assert_eq!(x_t, x0);
}

#[test]
fn out_of_range_steps_error() {
    let s = default_sched();
    let x = Tensor::<f32>::zeros(Dims::new(1, 1, 2, 2));
    assert!(matches!(
        forward_diffuse(&x, 1001, &x, &s),
        Err(DiffusionError::StepOutOfRange { t: 1001, .. })
    ));
    assert!(predict_x0(&x, 1001, &x, &s).is_err());
    assert!(posterior_step(&x, 1001, &x, None, &s).is_err());
    assert!(posterior_step(&x, 0, &x, None, &s).is_err());
    assert!(diffuse_from_initial_lq(&x, 5000, &mut Rng::new(0, 0), &s).is_err());
}

#[test]
fn jump_variance_from_zero_image() {
    let s = default_sched();
    let x0 = Tensor::<f32>::zeros(Dims::new(1, 1, 1000, 1000));
    let (x_t, _) = diffuse_from_initial_lq(&x0, 500, &mut Rng::new(3, 0), &s).unwrap();
    let n = x_t.numel() as f64;
    let m = x_t.mean_f64();
    let var = x_t.data().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    let want = 1.0 - s.alpha_bar(500);
    assert!((var - want).abs() / want < 0.01, "{var} vs {want}");
}

#[test]
fn jump_uses_the_returned_noise() {
    let s = default_sched();
    let x = randn::<f32>(&mut Rng::new(4, 0), Dims::new(2, 3, 5, 5));
    let (x_t, eps) = diffuse_from_initial_lq(&x, 123, &mut Rng::new(4, 1), &s).unwrap();
    assert_eq!(x_t, forward_diffuse(&x, 123, &eps, &s).unwrap());
}

#[test]
fn single_jump_matches_iterated_chain() {
    let s = default_sched();
    let x0 = [0.5f64, -0.9, 0.8, 1.0];
    let trials = 250_000;
    let mut rng = Rng::new(5, 0);
    for t in [10usize, 100, 250] {
        for &v in &x0 {
            let mut chain = vec![v; trials];
            for step in 1..=t {
                let (a, b) = (s.alpha(step).sqrt(), s.beta(step).sqrt());
                for x in chain.iter_mut() {
                    *x = a * *x + b * rng.normal();
                }
            }
            let jump: Vec<f64> = (0..trials)
                .map(|_| s.sqrt_alpha_bar(t) * v + s.sqrt_one_minus_alpha_bar(t) * rng.normal())
                .collect();
            let moments = |xs: &[f64]| {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                (m, var)
            };
            let ((mc, vc), (mj, vj)) = (moments(&chain), moments(&jump));
            assert!((mc - mj).abs() <= 0.01 * mj.abs(), "t={t} x0={v}: mean {mc} vs {mj}");
            assert!((vc - vj).abs() <= 0.01 * vj, "t={t} x0={v}: var {vc} vs {vj}");
        }
    }
}

#[test]
fn marginals_of_different_images_converge() {
    let s = default_sched();
    let a = Tensor::from_vec(Dims::new(1, 1, 2, 2), vec![0.9f32, -0.8, 0.4, -0.1]).unwrap();
    let b = Tensor::from_vec(Dims::new(1, 1, 2, 2), vec![-0.7f32, 0.6, -0.9, 0.8]).unwrap();
    let mut rng = Rng::new(6, 0);
    let mut sample = |x: &Tensor, t: usize| -> Vec<Vec<f64>> {
        (0..20_000)
            .map(|_| {
                let (xt, _) = diffuse_from_initial_lq(x, t, &mut rng, &s).unwrap();
                xt.data().iter().map(|&v| v as f64).collect()
            })
            .collect()
    };
    let mut last = f64::INFINITY;
    for t in [1, 50, 100, 200, 400, 700, 1000] {
        let d = frechet_distance(&fit_stats(&sample(&a, t)).unwrap(), &fit_stats(&sample(&b, t)).unwrap()).unwrap();
        assert!(d < last, "t={t}: {d} after {last}");
        last = d;
    }
}

// ---------- predict_x0 ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn predict_x0_inverts_forward(seed in any::<u64>(), t in 1usize..=1000) {
        let s = default_sched();
        let mut rng = Rng::new(seed, 7);
        let x0 = Tensor::from_fn(Dims::new(2, 3, 4, 4), |_| rng.uniform_range(-1.0, 1.0) as f32);
        let eps = randn::<f32>(&mut rng, x0.dims());
        let x_t = forward_diffuse(&x0, t, &eps, &s).unwrap();
        let back = predict_x0_unclamped(&x_t, t, &eps, &s).unwrap();
        // f32 storage of x_t limits recovery at large t; scale by the amplification 1/√ᾱ_t.
        let tol = 1e-5f64.max(4.0 * f32::EPSILON as f64 * (1.0 + 4.0 * s.sqrt_one_minus_alpha_bar(t)) / s.sqrt_alpha_bar(t));
        prop_assert!(back.max_abs_diff(&x0) <= tol, "t={} err={} tol={}", t, back.max_abs_diff(&x0), tol);
    }
}

#[test]
fn predict_x0_inverts_forward_on_small_steps() {
    let s = default_sched();
    let mut rng = Rng::new(8, 0);
    let x0 = Tensor::from_fn(Dims::new(2, 3, 8, 8), |_| rng.uniform_range(-1.0, 1.0) as f32);
    let eps = randn::<f32>(&mut rng, x0.dims());
    for t in [1, 5, 25, 50, 100, 200, 300] {
        let x_t = forward_diffuse(&x0, t, &eps, &s).unwrap();
        let back = predict_x0_unclamped(&x_t, t, &eps, &s).unwrap();
        assert!(back.max_abs_diff(&x0) <= 1e-5, "t={t}: {}", back.max_abs_diff(&x0));
    }
}

#[test]
fn predict_x0_with_zero_noise_estimate() {
    let s = default_sched();
    let x_t = Tensor::from_vec(Dims::new(1, 1, 1, 3), vec![0.5f32, -0.2, 0.95]).unwrap();
    let out = predict_x0(&x_t, 200, &Tensor::zeros(x_t.dims()), &s).unwrap();
    for (o, x) in out.data().iter().zip(x_t.data()) {
        let want = (*x as f64 / s.sqrt_alpha_bar(200)).clamp(-1.0, 1.0);
        assert!((*o as f64 - want).abs() < 1e-6);
    }
    assert_eq!(out.data()[2], 1.0);
}

#[test]
fn predict_x0_matches_scalar_formula() {
    let s = default_sched();
    let mut rng = Rng::new(9, 0);
    let x_t = randn::<f32>(&mut rng, Dims::new(1, 3, 6, 6));
    let e = randn::<f32>(&mut rng, x_t.dims());
    let out = predict_x0(&x_t, 37, &e, &s).unwrap();
    let ab = s.alpha_bar(37);
    for i in 0..out.numel() {
        let want = ((x_t.data()[i] as f64 - (1.0 - ab).sqrt() * e.data()[i] as f64) / ab.sqrt()).clamp(-1.0, 1.0);
        assert!((out.data()[i] as f64 - want).abs() < 1e-6);
    }
}

// ---------- posterior ----------

#[test]
fn final_step_is_deterministic() {
    let s = default_sched();
    let mut rng = Rng::new(10, 0);
    let x_t = randn::<f32>(&mut rng, Dims::new(2, 1, 3, 3));
    let x0 = randn::<f32>(&mut rng, x_t.dims());
    let mean = posterior_step(&x_t, 1, &x0, None, &s).unwrap();
    let mut rngs = [Rng::new(1, 1), Rng::new(1, 2)];
    let noisy = posterior_step(&x_t, 1, &x0, Some(&mut rngs), &s).unwrap();
    assert_eq!(mean, noisy);
    // At t = 1 the mean is x̂₀ itself.
    assert!(mean.max_abs_diff(&x0) < 1e-6);
}

#[test]
fn near_identity_regime() {
    let s = default_sched();
    let x_t = randn::<f32>(&mut Rng::new(11, 0), Dims::new(1, 3, 4, 4));
    for t in [1, 2, 3] {
        let out = posterior_step(&x_t, t, &x_t, None, &s).unwrap();
        assert!(out.max_abs_diff(&x_t) < 1e-3, "t={t}");
    }
}

#[test]
fn posterior_noise_has_the_posterior_std() {
    let s = default_sched();
    let z = Tensor::<f32>::zeros(Dims::new(1, 1, 500, 500));
    let mut rngs = [Rng::new(12, 0)];
    let out = posterior_step(&z, 500, &z, Some(&mut rngs), &s).unwrap();
    let sd = (out.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / out.numel() as f64).sqrt();
    let want = s.posterior_variance(500).sqrt();
    assert!((sd - want).abs() / want < 0.02);
}

// ---------- reverse chain ----------

fn clean_batch(n: usize, seed: u64) -> Tensor {
    Image::batch_to_model_tensor(&procedural_set(n, 16, 16, seed)).unwrap()
}

fn psnr_model_range(a: &Tensor, b: &Tensor) -> f64 {
    let ia = Image::from_model_tensor(a, 0).unwrap();
    let ib = Image::from_model_tensor(b, 0).unwrap();
    psnr(&ia, &ib).unwrap()
}

#[test]
fn reverse_from_step_zero_is_identity() {
    let s = default_sched();
    let x = clean_batch(1, 1);
    let out = reverse_chain(&x, 0, &ZeroEps, None, &s).unwrap();
    assert_eq!(out, x);
}

#[test]
fn exact_noise_oracle_recovers_the_input() {
    let s = default_sched();
    let x0 = clean_batch(1, 2);
    for t in [1, 10, 50, 100] {
        let (x_t, _) = diffuse_from_initial_lq(&x0, t, &mut Rng::new(t as u64, 0), &s).unwrap();
        let oracle = ExactEps { x0: x0.clone(), sched: s.clone() };
        let out = reverse_chain(&x_t, t, &oracle, None, &s).unwrap();
        let p = psnr_model_range(&out, &x0);
        assert!(p >= 40.0, "t={t}: {p:.2} dB");
    }
}

#[test]
fn recorded_noise_is_exact_for_a_single_step() {
    let s = default_sched();
    let x0 = clean_batch(2, 3);
    let (x_t, eps) = diffuse_from_initial_lq(&x0, 1, &mut Rng::new(1, 1), &s).unwrap();
    let out = reverse_chain(&x_t, 1, &RecordedEps(eps), None, &s).unwrap();
    assert!(out.max_abs_diff(&x0) < 1e-5);
}

#[test]
fn batched_reverse_equals_per_sample_runs() {
    let s = default_sched();
    let x0 = clean_batch(3, 4);
    let (x_t, _) = diffuse_from_initial_lq(&x0, 40, &mut Rng::new(4, 4), &s).unwrap();
    let oracle = ExactEps { x0: x0.clone(), sched: s.clone() };
    let mut rngs: Vec<Rng> = (0..3).map(|i| Rng::new(77, i)).collect();
    let batch = reverse_chain(&x_t, 40, &oracle, Some(&mut rngs), &s).unwrap();
    for i in 0..3 {
        let single_oracle = ExactEps { x0: x0.batch_slice(i, 1).unwrap(), sched: s.clone() };
        let mut r = [Rng::new(77, i as u64)];
        let one = reverse_chain(&x_t.batch_slice(i, 1).unwrap(), 40, &single_oracle, Some(&mut r), &s).unwrap();
        assert_eq!(one.data(), batch.sample(i));
    }
}

#[test]
fn stochastic_reverse_is_seeded() {
    let s = default_sched();
    let x0 = clean_batch(1, 5);
    let run = |seed| {
        let mut r = [Rng::new(seed, 0)];
        reverse_chain(&x0, 30, &ZeroEps, Some(&mut r), &s).unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn predictor_shape_errors_propagate() {
    struct Wrong;
    impl lqsynth_core::diffusion::NoisePredictor for Wrong {
        fn predict_eps(&self, _: &Tensor, _: &[usize]) -> Result<Tensor, DiffusionError> {
            Ok(Tensor::zeros(Dims::new(1, 1, 1, 1)))
        }
    }
    let s = default_sched();
    let x = clean_batch(1, 6);
    assert!(matches!(reverse_chain(&x, 3, &Wrong, None, &s), Err(DiffusionError::Model(_))));
}

// ---------- training step ----------

#[test]
fn exact_oracle_has_zero_training_loss() {
    let s = default_sched();
    let x0 = clean_batch(4, 7);
    let mut model = Fixed::new(ExactEps { x0: x0.clone(), sched: s.clone() });
    let mut adam = Adam::new(AdamConfig::default());
    let loss = train_step(&mut model, &mut adam, &x0, &mut Rng::new(7, 0), &s, 0.995).unwrap();
    assert!(loss < 1e-4, "{loss}");
    assert_eq!(*model.ema_calls.lock().unwrap(), 1);
}

#[test]
fn zero_predictor_loss_is_half_normal_mean() {
    let s = default_sched();
    let x0 = Tensor::from_fn(Dims::new(64, 3, 32, 32), |i| ((i % 7) as f32 - 3.0) / 3.0);
    let mut model = Fixed::new(ZeroEps);
    let mut adam = Adam::new(AdamConfig::default());
    let loss = train_step(&mut model, &mut adam, &x0, &mut Rng::new(8, 0), &s, 0.995).unwrap();
    let want = (2.0 / std::f64::consts::PI).sqrt();
    assert!((loss - want).abs() < 0.01, "{loss} vs {want}");
}

#[test]
fn non_finite_loss_aborts() {
    let s = default_sched();
    let x0 = clean_batch(2, 9);
    let mut model = Fixed::new(NanEps);
    let mut adam = Adam::new(AdamConfig::default());
    let err = train_step(&mut model, &mut adam, &x0, &mut Rng::new(9, 0), &s, 0.995).unwrap_err();
    assert!(matches!(err, DiffusionError::NonFiniteLoss { step: 1, .. }));
    assert_eq!(*model.ema_calls.lock().unwrap(), 0);
}
