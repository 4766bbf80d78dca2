use serde::{Deserialize, Serialize};

use super::{forward_diffuse_batch, DiffusionError, NoiseSchedule};
use crate::tensor::{randn, Adam, AdamConfig, ParamSet, Rng, Tensor};

/// A noise predictor whose parameters can be fitted.
pub trait Trainable {
    /// Mean absolute error between ε̂(x_t, steps) and `eps`, with the
    /// gradient of that loss for every trainable parameter.
    fn l1_loss_and_grads(
        &self,
        x_t: &Tensor,
        steps: &[usize],
        eps: &Tensor,
    ) -> Result<(f64, ParamSet<f32>), DiffusionError>;

    fn params_mut(&mut self) -> &mut ParamSet<f32>;

    /// Moves the shadow weights towards the live weights.
    fn update_ema(&mut self, decay: f64) -> Result<(), DiffusionError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch: usize,
    pub adam: AdamConfig,
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 16,
            adam: AdamConfig::default(),
            ema_decay: 0.995,
        }
    }
}

/// One optimization step on a batch of clean images in model range.
///
/// Each sample gets a step index drawn uniformly from `0..T`, i.e. diffusion
/// step `index + 1`, and fresh Gaussian noise.
pub fn train_step<M: Trainable + ?Sized>(
    model: &mut M,
    adam: &mut Adam<f32>,
    x0: &Tensor,
    rng: &mut Rng,
    sched: &NoiseSchedule,
    ema_decay: f64,
) -> Result<f64, DiffusionError> {
    let n = x0.dims().n;
    let t_total = sched.t_total() as i64;
    let steps: Vec<usize> = (0..n)
        .map(|_| rng.rand_uniform_int(0, t_total - 1) as usize + 1)
        .collect();
    let eps: Tensor = randn(rng, x0.dims());
    let x_t = forward_diffuse_batch(x0, &steps, &eps, sched)?;
    let (loss, grads) = model.l1_loss_and_grads(&x_t, &steps, &eps)?;
    if !loss.is_finite() {
        return Err(DiffusionError::NonFiniteLoss {
            step: adam.steps() + 1,
            loss,
        });
    }
    adam.step(model.params_mut(), &grads)?;
    model.update_ema(ema_decay)?;
    Ok(loss)
}
