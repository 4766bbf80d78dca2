use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::denoiser::{DenoiserFeatures, DenoiserModel};
use crate::image::Image;

/// Maps an image to a fixed-length feature vector.
pub trait FeatureExtractor: Sync {
    fn dim(&self) -> usize;
    fn extract(&self, image: &Image) -> Result<Vec<f64>, MetricsError>;
}

/// Which extractor to build; see [`PatchStats`] and
/// [`DenoiserFeatures`](crate::denoiser::DenoiserFeatures). `t` is a 0-based
/// time index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorKind {
    PatchStats { patch_size: usize, strides: Vec<usize> },
    DenoiserFeatures { level: usize, t: usize },
}

impl Default for ExtractorKind {
    fn default() -> Self {
        let p = PatchStats::default();
        ExtractorKind::PatchStats {
            patch_size: p.patch_size,
            strides: p.strides,
        }
    }
}

impl ExtractorKind {
    /// Builds the extractor; the denoiser variant needs a trained model.
    pub fn build<'a>(
        &self,
        model: Option<&'a DenoiserModel>,
    ) -> Result<Box<dyn FeatureExtractor + 'a>, MetricsError> {
        match self {
            ExtractorKind::PatchStats { patch_size, strides } => {
                Ok(Box::new(PatchStats::new(*patch_size, strides.clone())?))
            }
            ExtractorKind::DenoiserFeatures { level, t } => {
                let model = model.ok_or_else(|| {
                    MetricsError::Config("denoiser features need a model".into())
                })?;
                Ok(Box::new(DenoiserFeatures::new(model, *level, *t)?))
            }
        }
    }
}

/// Gradient-magnitude histogram bins per scale.
pub const GRAD_BINS: usize = 6;
/// Upper edges of all but the last bin.
const GRAD_EDGES: [f64; GRAD_BINS - 1] = [0.01, 0.02, 0.04, 0.08, 0.16];

/// Hand-built texture statistics.
///
/// Features: per-channel mean and std (6 values), then for every stride `s`
/// (luma box-downsampled by `s`) the mean and std over non-overlapping
/// `patch_size` tiles of the tile std and of the tile mean gradient
/// magnitude, followed by a normalized gradient-magnitude histogram.
/// Dimension: `6 + strides.len()·(4 + GRAD_BINS)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub patch_size: usize,
    pub strides: Vec<usize>,
}

impl Default for PatchStats {
    fn default() -> Self {
        PatchStats {
            patch_size: 8,
            strides: vec![1, 2],
        }
    }
}

impl PatchStats {
    pub fn new(patch_size: usize, strides: Vec<usize>) -> Result<Self, MetricsError> {
        if patch_size < 2 || strides.is_empty() || strides.contains(&0) {
            return Err(MetricsError::Config(format!(
                "patch_size {patch_size} with strides {strides:?}"
            )));
        }
        Ok(PatchStats {
            patch_size,
            strides,
        })
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn box_down(plane: &[f64], w: usize, h: usize, s: usize) -> (Vec<f64>, usize, usize) {
    if s == 1 {
        return (plane.to_vec(), w, h);
    }
    let (ow, oh) = ((w / s).max(1), (h / s).max(1));
    let (sx, sy) = (s.min(w), s.min(h));
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for dy in 0..sy {
                for dx in 0..sx {
                    acc += plane[(y * sy + dy) * w + x * sx + dx];
                }
            }
            out[y * ow + x] = acc / (sx * sy) as f64;
        }
    }
    (out, ow, oh)
}

impl FeatureExtractor for PatchStats {
    fn dim(&self) -> usize {
        6 + self.strides.len() * (4 + GRAD_BINS)
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>, MetricsError> {
        let (w, h) = image.size();
        if w < 2 || h < 2 {
            return Err(MetricsError::TooSmall {
                width: w,
                height: h,
                min: 2,
            });
        }
        let mut out = Vec::with_capacity(self.dim());
        let mut stds = Vec::with_capacity(3);
        for c in 0..3 {
            let plane: Vec<f64> = image
                .plane(c.min(image.channels() - 1))
                .iter()
                .map(|&v| v as f64)
                .collect();
            let (m, s) = mean_std(&plane);
            out.push(m);
            stds.push(s);
        }
        out.extend(stds);
        let luma = image.luma();
        for &s in &self.strides {
            let (plane, pw, ph) = box_down(&luma, w, h, s);
            // Forward-difference gradient magnitude on the (pw−1)×(ph−1) grid.
            let (gw, gh) = (pw.saturating_sub(1).max(1), ph.saturating_sub(1).max(1));
            let grad: Vec<f64> = (0..gh * gw)
                .map(|i| {
                    let (y, x) = (i / gw, i % gw);
                    let v = plane[y * pw + x];
                    let dx = if x + 1 < pw { plane[y * pw + x + 1] - v } else { 0.0 };
                    let dy = if y + 1 < ph { plane[(y + 1) * pw + x] - v } else { 0.0 };
                    (dx * dx + dy * dy).sqrt()
                })
                .collect();
            let p = self.patch_size;
            let (tx, ty) = ((pw / p).max(1), (ph / p).max(1));
            let (tw, th) = (p.min(pw), p.min(ph));
            let mut tile_std = Vec::with_capacity(tx * ty);
            let mut tile_grad = Vec::with_capacity(tx * ty);
            for by in 0..ty {
                for bx in 0..tx {
                    let mut vals = Vec::with_capacity(tw * th);
                    let mut g = Vec::with_capacity(tw * th);
                    for y in by * th..(by + 1) * th {
                        for x in bx * tw..(bx + 1) * tw {
                            vals.push(plane[y * pw + x]);
                            if x < gw && y < gh {
                                g.push(grad[y * gw + x]);
                            }
                        }
                    }
                    tile_std.push(mean_std(&vals).1);
                    tile_grad.push(if g.is_empty() { 0.0 } else { mean_std(&g).0 });
                }
            }
            let (a, b) = mean_std(&tile_std);
            let (c, d) = mean_std(&tile_grad);
            out.extend([a, b, c, d]);
            let mut hist = [0.0; GRAD_BINS];
            for &g in &grad {
                let bin = GRAD_EDGES.iter().position(|&e| g < e).unwrap_or(GRAD_BINS - 1);
                hist[bin] += 1.0;
            }
            out.extend(hist.iter().map(|v| v / grad.len() as f64));
        }
        debug_assert_eq!(out.len(), self.dim());
        Ok(out)
    }
}

/// Row-per-image feature matrix, computed in parallel.
pub fn extract_features(
    images: &[Image],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<Vec<f64>>, MetricsError> {
    images.par_iter().map(|img| extractor.extract(img)).collect()
}
