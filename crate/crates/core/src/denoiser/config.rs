use serde::{Deserialize, Serialize};

use super::DenoiserError;

/// Shape of the time-conditioned UNet noise predictor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub channel_mults: Vec<usize>,
    pub res_blocks_per_level: usize,
    pub time_embed_dim: usize,
    pub norm_groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 3,
            base_channels: 32,
            channel_mults: vec![1, 2, 4],
            res_blocks_per_level: 2,
            time_embed_dim: 128,
            norm_groups: 8,
        }
    }
}

impl UNetConfig {
    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mults[level]
    }

    /// Spatial sides must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.levels().saturating_sub(1))
    }

    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: String| Err(DenoiserError::Config(m));
        if self.in_channels == 0 || self.base_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.channel_mults.is_empty() || self.channel_mults.contains(&0) {
            return bad(format!("invalid channel_mults {:?}", self.channel_mults));
        }
        if self.res_blocks_per_level == 0 {
            return bad("res_blocks_per_level must be at least 1".into());
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return bad(format!("time_embed_dim {} must be even", self.time_embed_dim));
        }
        if self.norm_groups == 0 {
            return bad("norm_groups must be positive".into());
        }
        let realized = (0..self.levels()).map(|l| self.level_channels(l));
        for c in std::iter::once(self.base_channels).chain(realized) {
            if c % self.norm_groups != 0 {
                return Err(DenoiserError::Groups {
                    groups: self.norm_groups,
                    channels: c,
                });
            }
        }
        Ok(())
    }
}
