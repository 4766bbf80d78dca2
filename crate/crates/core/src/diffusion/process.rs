use super::{DiffusionError, NoiseSchedule};
use crate::tensor::{randn, Rng, Scalar, Tensor};

/// Anything that predicts the injected noise of a batch of noisy inputs.
pub trait NoisePredictor: Sync {
    /// ε̂ for `x_t`, where `steps[i]` is the 1-based diffusion step of sample `i`.
    fn predict_eps(&self, x_t: &Tensor, steps: &[usize]) -> Result<Tensor, DiffusionError>;
}

fn same_dims<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &'static str) -> Result<(), DiffusionError> {
    if a.dims() != b.dims() {
        return Err(crate::tensor::TensorError::Shape {
            op,
            expected: a.dims(),
            got: b.dims(),
        }
        .into());
    }
    Ok(())
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε` with its own step per sample. Step 0 leaves the
/// sample untouched.
pub fn forward_diffuse_batch<T: Scalar>(
    x0: &Tensor<T>,
    steps: &[usize],
    eps: &Tensor<T>,
    sched: &NoiseSchedule,
) -> Result<Tensor<T>, DiffusionError> {
    same_dims(x0, eps, "forward_diffuse")?;
    if steps.len() != x0.dims().n {
        return Err(DiffusionError::BatchSteps {
            steps: steps.len(),
            batch: x0.dims().n,
        });
    }
    let per = x0.dims().sample();
    let mut out = x0.clone();
    for (i, &t) in steps.iter().enumerate() {
        sched.check(t)?;
        if t == 0 {
            continue;
        }
        let (a, b) = (sched.sqrt_alpha_bar(t), sched.sqrt_one_minus_alpha_bar(t));
        let dst = &mut out.data_mut()[i * per..(i + 1) * per];
        for (o, (&x, &e)) in dst.iter_mut().zip(x0.sample(i).iter().zip(eps.sample(i))) {
            *o = T::of(a * x.as_f64() + b * e.as_f64());
        }
    }
    Ok(out)
}

pub fn forward_diffuse<T: Scalar>(
    x0: &Tensor<T>,
    t: usize,
    eps: &Tensor<T>,
    sched: &NoiseSchedule,
) -> Result<Tensor<T>, DiffusionError> {
    forward_diffuse_batch(x0, &vec![t; x0.dims().n], eps, sched)
}

/// Single jump from the initial degraded image to step `t`. Returns
/// `(x_t, ε)`; ε is drawn even at `t = 0` so the RNG advance does not depend on `t`.
pub fn diffuse_from_initial_lq(
    x: &Tensor,
    t: usize,
    rng: &mut Rng,
    sched: &NoiseSchedule,
) -> Result<(Tensor, Tensor), DiffusionError> {
    sched.check(t)?;
    let eps: Tensor = randn(rng, x.dims());
    let x_t = forward_diffuse(x, t, &eps, sched)?;
    Ok((x_t, eps))
}

/// `(x_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t` without clamping.
pub fn predict_x0_unclamped<T: Scalar>(
    x_t: &Tensor<T>,
    t: usize,
    eps_hat: &Tensor<T>,
    sched: &NoiseSchedule,
) -> Result<Tensor<T>, DiffusionError> {
    same_dims(x_t, eps_hat, "predict_x0")?;
    sched.check(t)?;
    let (a, b) = (sched.sqrt_alpha_bar(t), sched.sqrt_one_minus_alpha_bar(t));
    Ok(x_t.zip_map(eps_hat, |x, e| T::of((x.as_f64() - b * e.as_f64()) / a))?)
}

/// Predicted clean image, clamped to the model range `[-1, 1]`.
pub fn predict_x0<T: Scalar>(
    x_t: &Tensor<T>,
    t: usize,
    eps_hat: &Tensor<T>,
    sched: &NoiseSchedule,
) -> Result<Tensor<T>, DiffusionError> {
    let (lo, hi) = (T::of(-1.0), T::of(1.0));
    Ok(predict_x0_unclamped(x_t, t, eps_hat, sched)?.map(|v| num_traits::Float::clamp(v, lo, hi)))
}

/// One reverse step: the Gaussian posterior mean given `x̂₀`, plus
/// `√β̃_t·z` for `t > 1` when per-sample RNGs are supplied.
pub fn posterior_step(
    x_t: &Tensor,
    t: usize,
    x0_hat: &Tensor,
    rngs: Option<&mut [Rng]>,
    sched: &NoiseSchedule,
) -> Result<Tensor, DiffusionError> {
    same_dims(x_t, x0_hat, "posterior_step")?;
    sched.check(t)?;
    if t == 0 {
        return Err(DiffusionError::StepOutOfRange {
            t,
            t_total: sched.t_total(),
        });
    }
    let (c0, ct) = (sched.posterior_mean_coef_x0(t), sched.posterior_mean_coef_xt(t));
    let mut out = x0_hat.zip_map(x_t, |x0, xt| (c0 * x0 as f64 + ct * xt as f64) as f32)?;
    if let Some(rngs) = rngs {
        let n = x_t.dims().n;
        if rngs.len() != n {
            return Err(DiffusionError::BatchSteps {
                steps: rngs.len(),
                batch: n,
            });
        }
        if t > 1 {
            let sd = sched.posterior_variance(t).sqrt();
            let per = x_t.dims().sample();
            for (i, rng) in rngs.iter_mut().enumerate() {
                for v in &mut out.data_mut()[i * per..(i + 1) * per] {
                    *v = (*v as f64 + sd * rng.normal()) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Walks `s = t_start, …, 1` with ε̂ from `model`, returning `x_0`.
/// `rngs` (one per sample) enables posterior noise; `None` is deterministic.
pub fn reverse_chain(
    x_t: &Tensor,
    t_start: usize,
    model: &dyn NoisePredictor,
    mut rngs: Option<&mut [Rng]>,
    sched: &NoiseSchedule,
) -> Result<Tensor, DiffusionError> {
    sched.check(t_start)?;
    let n = x_t.dims().n;
    let mut x = x_t.clone();
    for s in (1..=t_start).rev() {
        let eps_hat = model.predict_eps(&x, &vec![s; n])?;
        if eps_hat.dims() != x.dims() {
            return Err(DiffusionError::Model(format!(
                "predictor returned {} for input {}",
                eps_hat.dims(),
                x.dims()
            )));
        }
        let x0_hat = predict_x0(&x, s, &eps_hat, sched)?;
        x = posterior_step(&x, s, &x0_hat, rngs.as_deref_mut(), sched)?;
    }
    Ok(x)
}
