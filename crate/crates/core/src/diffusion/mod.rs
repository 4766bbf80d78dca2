//! Noise schedules, the forward jump, reverse sampling, and the training step.

mod process;
mod schedule;
mod train;

pub use process::{
    diffuse_from_initial_lq, forward_diffuse, forward_diffuse_batch, posterior_step, predict_x0,
    predict_x0_unclamped, reverse_chain, NoisePredictor,
};
pub use schedule::{linear_schedule, DiffusionConfig, NoiseSchedule};
pub use train::{train_step, TrainConfig, Trainable};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("diffusion step {t} outside 0..={t_total}")]
    StepOutOfRange { t: usize, t_total: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("{steps} per-sample entries for a batch of {batch}")]
    BatchSteps { steps: usize, batch: usize },
    #[error("non-finite training loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("noise predictor: {0}")]
    Model(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
