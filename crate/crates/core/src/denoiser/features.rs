use super::{DenoiserModel, FrozenDenoiser};
use crate::image::Image;
use crate::metrics::{FeatureExtractor, MetricsError};

/// Per-channel mean and std of the EMA denoiser's encoder activations at one
/// level, evaluated on the clean image at a fixed time index.
pub struct DenoiserFeatures<'a> {
    net: FrozenDenoiser<'a>,
    level: usize,
    time_idx: usize,
    channels: usize,
}

impl<'a> DenoiserFeatures<'a> {
    pub fn new(model: &'a DenoiserModel, level: usize, time_idx: usize) -> Result<Self, MetricsError> {
        let cfg = model.config();
        if level >= cfg.levels() {
            return Err(MetricsError::Config(format!(
                "level {level} outside 0..{}",
                cfg.levels()
            )));
        }
        Ok(DenoiserFeatures {
            net: model.ema_copy(),
            level,
            time_idx,
            channels: cfg.level_channels(level),
        })
    }
}

impl FeatureExtractor for DenoiserFeatures<'_> {
    fn dim(&self) -> usize {
        2 * self.channels
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>, MetricsError> {
        let act = self
            .net
            .level_activations(&image.to_model_tensor(), &[self.time_idx], self.level)
            .map_err(|e| MetricsError::Extraction(e.to_string()))?;
        let plane = act.dims().plane();
        let mut out = Vec::with_capacity(self.dim());
        for ch in act.data().chunks(plane) {
            let n = plane as f64;
            let m = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = ch.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
            out.push(m);
            out.push(var.sqrt());
        }
        Ok(out)
    }
}
