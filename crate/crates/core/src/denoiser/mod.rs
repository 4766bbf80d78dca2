//! Time-conditioned UNet noise predictor trained on the autodiff tape.

mod config;
mod features;
mod unet;

pub use config::UNetConfig;
pub use features::DenoiserFeatures;

use crate::diffusion::{DiffusionError, NoisePredictor, Trainable};
use crate::tensor::{ema_update, l1_loss, ParamSet, Rng, Scalar, Tape, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum DenoiserError {
    #[error("invalid UNet config: {0}")]
    Config(String),
    #[error("{groups} norm groups do not divide {channels} channels")]
    Groups { groups: usize, channels: usize },
    #[error("bad denoiser input: {0}")]
    Input(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("parameters do not match the config: {0}")]
    Params(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl From<DenoiserError> for DiffusionError {
    fn from(e: DenoiserError) -> Self {
        match e {
            DenoiserError::Tensor(t) => DiffusionError::Tensor(t),
            other => DiffusionError::Model(other.to_string()),
        }
    }
}

/// Live weights for training plus an EMA shadow used for sampling.
#[derive(Clone, Debug)]
pub struct DenoiserModel {
    config: UNetConfig,
    params: ParamSet<f32>,
    ema: ParamSet<f32>,
}

impl DenoiserModel {
    pub fn init(config: UNetConfig, rng: &mut Rng) -> Result<Self, DenoiserError> {
        config.validate()?;
        let params = unet::init_params(&config, rng);
        Ok(DenoiserModel {
            ema: params.clone(),
            params,
            config,
        })
    }

    /// Rebuilds a model from stored tables, checking names and shapes.
    pub fn from_parts(
        config: UNetConfig,
        params: ParamSet<f32>,
        ema: ParamSet<f32>,
    ) -> Result<Self, DenoiserError> {
        config.validate()?;
        let mut expected = ParamSet::new();
        for (name, dims) in unet::param_shapes(&config) {
            expected.insert(name, Tensor::<f32>::zeros(dims))?;
        }
        for set in [&params, &ema] {
            expected
                .check_congruent(set)
                .map_err(|e| DenoiserError::Params(e.to_string()))?;
        }
        Ok(DenoiserModel {
            config,
            params,
            ema,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub fn ema_params(&self) -> &ParamSet<f32> {
        &self.ema
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// Frozen view on the EMA weights; this is what sampling uses.
    pub fn ema_copy(&self) -> FrozenDenoiser<'_> {
        FrozenDenoiser {
            config: &self.config,
            params: &self.ema,
        }
    }

    /// Frozen view on the live weights.
    pub fn live(&self) -> FrozenDenoiser<'_> {
        FrozenDenoiser {
            config: &self.config,
            params: &self.params,
        }
    }

    /// Loss and gradients for an arbitrary target, with 0-based time indices.
    pub fn loss_and_grads(
        &self,
        x_t: &Tensor,
        time_idx: &[usize],
        target: &Tensor,
    ) -> Result<(f64, ParamSet<f32>), DenoiserError> {
        let tape = Tape::new();
        let fwd = unet::forward(&self.config, &self.params, &tape, x_t, time_idx, true)?;
        let loss = l1_loss(fwd.output, tape.constant(target.clone()))?;
        let value = loss.value().item()? as f64;
        let grads = tape.backward(loss)?;
        let mut out = ParamSet::new();
        for (name, var) in fwd.bound {
            out.insert(name, grads.wrt(var))?;
        }
        Ok((value, out))
    }
}

/// Evaluates the UNet for any parameter precision; `time_idx` is 0-based.
pub fn unet_forward<T: Scalar>(
    config: &UNetConfig,
    params: &ParamSet<T>,
    x: &Tensor<T>,
    time_idx: &[usize],
) -> Result<Tensor<T>, DenoiserError> {
    let tape = Tape::new();
    let fwd = unet::forward(config, params, &tape, x, time_idx, false)?;
    Ok((*fwd.output.value()).clone())
}

/// Sum of `weights ⊙ output` and its gradient with respect to every
/// parameter, for derivative checks in any precision.
pub fn unet_weighted_sum_grads<T: Scalar>(
    config: &UNetConfig,
    params: &ParamSet<T>,
    x: &Tensor<T>,
    time_idx: &[usize],
    weights: &Tensor<T>,
) -> Result<(f64, ParamSet<T>), DenoiserError> {
    let tape = Tape::new();
    let fwd = unet::forward(config, params, &tape, x, time_idx, true)?;
    let total = fwd.output.weighted_sum(weights.clone())?;
    let value = total.value().item()?.as_f64();
    let grads = tape.backward(total)?;
    let mut out = ParamSet::new();
    for (name, var) in fwd.bound {
        out.insert(name, grads.wrt(var))?;
    }
    Ok((value, out))
}

/// Parameter names and dims for a config, without allocating weights.
pub fn param_layout(config: &UNetConfig) -> Vec<(String, crate::tensor::Dims)> {
    unet::param_shapes(config)
}

/// Read-only weights borrowed from a [`DenoiserModel`].
#[derive(Clone, Copy)]
pub struct FrozenDenoiser<'a> {
    config: &'a UNetConfig,
    params: &'a ParamSet<f32>,
}

impl FrozenDenoiser<'_> {
    pub fn params(&self) -> &ParamSet<f32> {
        self.params
    }

    pub fn forward(&self, x_t: &Tensor, time_idx: &[usize]) -> Result<Tensor, DenoiserError> {
        unet_forward(self.config, self.params, x_t, time_idx)
    }

    /// Encoder activations at the end of `level`, before downsampling.
    pub fn level_activations(
        &self,
        x: &Tensor,
        time_idx: &[usize],
        level: usize,
    ) -> Result<Tensor, DenoiserError> {
        if level >= self.config.levels() {
            return Err(DenoiserError::Input(format!(
                "level {level} outside 0..{}",
                self.config.levels()
            )));
        }
        let tape = Tape::new();
        let fwd = unet::forward(self.config, self.params, &tape, x, time_idx, false)?;
        Ok((*fwd.levels[level].value()).clone())
    }
}

fn to_time_idx(steps: &[usize]) -> Result<Vec<usize>, DiffusionError> {
    steps
        .iter()
        .map(|&s| {
            s.checked_sub(1)
                .ok_or_else(|| DiffusionError::Model("noise predictor called at step 0".into()))
        })
        .collect()
}

impl NoisePredictor for FrozenDenoiser<'_> {
    fn predict_eps(&self, x_t: &Tensor, steps: &[usize]) -> Result<Tensor, DiffusionError> {
        Ok(self.forward(x_t, &to_time_idx(steps)?)?)
    }
}

/// Predicts with the EMA weights.
impl NoisePredictor for DenoiserModel {
    fn predict_eps(&self, x_t: &Tensor, steps: &[usize]) -> Result<Tensor, DiffusionError> {
        self.ema_copy().predict_eps(x_t, steps)
    }
}

impl Trainable for DenoiserModel {
    fn l1_loss_and_grads(
        &self,
        x_t: &Tensor,
        steps: &[usize],
        eps: &Tensor,
    ) -> Result<(f64, ParamSet<f32>), DiffusionError> {
        Ok(self.loss_and_grads(x_t, &to_time_idx(steps)?, eps)?)
    }

    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    fn update_ema(&mut self, decay: f64) -> Result<(), DiffusionError> {
        ema_update(&mut self.ema, &self.params, decay)?;
        Ok(())
    }
}
