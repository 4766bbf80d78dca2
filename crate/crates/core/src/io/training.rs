use serde::{Deserialize, Serialize};

use super::{random_crop, IoError};
use crate::denoiser::DenoiserModel;
use crate::diffusion::{train_step, NoiseSchedule, TrainConfig};
use crate::image::Image;
use crate::tensor::{Adam, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub iters: u64,
    /// Square crop side fed to the network.
    pub patch: usize,
    pub seed: u64,
}

/// Fits `model` on random `patch` crops of `images`. Batches and diffusion
/// noise come from two streams of `run.seed`. Returns the per-step losses.
pub fn train_on_images(
    model: &mut DenoiserModel,
    images: &[Image],
    sched: &NoiseSchedule,
    run: &TrainRun,
    mut on_step: impl FnMut(u64, f64),
) -> Result<Vec<f64>, IoError> {
    if images.is_empty() || run.config.batch == 0 {
        return Err(IoError::Config("training needs images and a positive batch".into()));
    }
    let mut data = Rng::derive(run.seed, &[0]);
    let mut noise = Rng::derive(run.seed, &[1]);
    let mut adam = Adam::new(run.config.adam);
    let mut losses = Vec::with_capacity(run.iters as usize);
    for step in 1..=run.iters {
        let crops = (0..run.config.batch)
            .map(|_| random_crop(&images[data.index(images.len())], run.patch, &mut data))
            .collect::<Result<Vec<_>, _>>()?;
        let x0 = Image::batch_to_model_tensor(&crops)?;
        let loss = train_step(model, &mut adam, &x0, &mut noise, sched, run.config.ema_decay)?;
        on_step(step, loss);
        losses.push(loss);
    }
    Ok(losses)
}
