//! Shared fixtures for the benchmarks.

use lqsynth_core::denoiser::{DenoiserModel, UNetConfig};
use lqsynth_core::tensor::Rng;

/// The small UNet used by the toy experiments.
pub fn toy_unet() -> UNetConfig {
    UNetConfig {
        in_channels: 3,
        base_channels: 16,
        channel_mults: vec![1, 2],
        res_blocks_per_level: 1,
        time_embed_dim: 64,
        norm_groups: 8,
    }
}

pub fn toy_model(seed: u64) -> DenoiserModel {
    DenoiserModel::init(toy_unet(), &mut Rng::new(seed, 0)).expect("valid toy config")
}
