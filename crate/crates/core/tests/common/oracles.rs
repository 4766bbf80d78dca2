//! Noise predictors with privileged knowledge, used as test oracles.

use std::sync::Mutex;

use lqsynth_core::diffusion::{DiffusionError, NoisePredictor, NoiseSchedule, Trainable};
use lqsynth_core::tensor::{ParamSet, Tensor};

/// Knows the clean batch and returns the noise that is actually present:
/// `(x_s − √ᾱ_s·x0)/√(1−ᾱ_s)`.
pub struct ExactEps {
    pub x0: Tensor,
    pub sched: NoiseSchedule,
}

impl ExactEps {
    fn eps(&self, x_t: &Tensor, steps: &[usize]) -> Tensor {
        let per = x_t.dims().sample();
        let mut out = x_t.clone();
        for (i, &s) in steps.iter().enumerate() {
            let a = self.sched.alpha_bar(s);
            for (j, v) in out.data_mut()[i * per..(i + 1) * per].iter_mut().enumerate() {
                let x0 = self.x0.data()[i * per + j] as f64;
                *v = ((*v as f64 - a.sqrt() * x0) / (1.0 - a).sqrt()) as f32;
            }
        }
        out
    }
}

impl NoisePredictor for ExactEps {
    fn predict_eps(&self, x_t: &Tensor, steps: &[usize]) -> Result<Tensor, DiffusionError> {
        Ok(self.eps(x_t, steps))
    }
}

/// Returns the noise drawn at diffusion time, whatever the step.
pub struct RecordedEps(pub Tensor);

impl NoisePredictor for RecordedEps {
    fn predict_eps(&self, _x_t: &Tensor, _steps: &[usize]) -> Result<Tensor, DiffusionError> {
        Ok(self.0.clone())
    }
}

/// Predicts zero noise.
pub struct ZeroEps;

impl NoisePredictor for ZeroEps {
    fn predict_eps(&self, x_t: &Tensor, _steps: &[usize]) -> Result<Tensor, DiffusionError> {
        Ok(Tensor::zeros(x_t.dims()))
    }
}

/// Parameter-free trainable wrappers for the training-step contract.
pub struct Fixed<P> {
    pub predictor: P,
    pub params: ParamSet<f32>,
    pub ema_calls: Mutex<usize>,
}

impl<P> Fixed<P> {
    pub fn new(predictor: P) -> Self {
        Fixed {
            predictor,
            params: ParamSet::new(),
            ema_calls: Mutex::new(0),
        }
    }
}

impl<P: NoisePredictor> Trainable for Fixed<P> {
    fn l1_loss_and_grads(
        &self,
        x_t: &Tensor,
        steps: &[usize],
        eps: &Tensor,
    ) -> Result<(f64, ParamSet<f32>), DiffusionError> {
        let pred = self.predictor.predict_eps(x_t, steps)?;
        let n = pred.numel() as f64;
        let loss = pred
            .data()
            .iter()
            .zip(eps.data())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / n;
        Ok((loss, ParamSet::new()))
    }

    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    fn update_ema(&mut self, _decay: f64) -> Result<(), DiffusionError> {
        *self.ema_calls.lock().unwrap() += 1;
        Ok(())
    }
}

/// Emits NaN to exercise the non-finite guard.
pub struct NanEps;

impl NoisePredictor for NanEps {
    fn predict_eps(&self, x_t: &Tensor, _steps: &[usize]) -> Result<Tensor, DiffusionError> {
        Ok(Tensor::full(x_t.dims(), f32::NAN))
    }
}
