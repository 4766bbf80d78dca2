//! Fréchet-distance and PSNR curves over the diffusion step.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_features, fit_stats, frechet_distance, psnr, FeatureExtractor, FeatureStats};
use crate::degrade::{self, resize_to, DegradationRanges, PipelineKind, ResizeFilter};
use crate::diffusion::{NoisePredictor, NoiseSchedule};
use crate::image::Image;
use crate::synth::{denoise_batch, SynthError};
use crate::tensor::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kinds: Vec<PipelineKind>,
    pub t_grid: Vec<usize>,
    pub ranges: DegradationRanges,
    /// HQ side divided by LQ side.
    pub scale: usize,
    pub deterministic_reverse: bool,
    pub seed: u64,
    /// Images per reverse-chain batch.
    pub batch: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kinds: PipelineKind::ALL.to_vec(),
            t_grid: vec![0, 25, 50, 100, 150, 200],
            ranges: DegradationRanges::default(),
            scale: 2,
            deterministic_reverse: false,
            seed: 0,
            batch: 16,
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub pipeline_kind: String,
    pub t: usize,
    pub frechet: f64,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub n: usize,
}

/// For every kind, degrades each HQ image once, then for every `t` in the
/// grid synthesizes the LQ set and scores it. The degradation draw and the
/// noise streams of image `i` are shared across the grid, so differences
/// between steps are not masked by resampling.
pub fn sweep_curves(
    hq: &[Image],
    real: &FeatureStats,
    extractor: &dyn FeatureExtractor,
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    cfg: &SweepConfig,
) -> Result<Vec<CurvePoint>, SynthError> {
    if hq.len() < 2 {
        return Err(SynthError::Empty);
    }
    if cfg.scale == 0 || cfg.batch == 0 {
        return Err(SynthError::Config("scale and batch must be positive".into()));
    }
    let mut rows = Vec::new();
    for (k, &kind) in cfg.kinds.iter().enumerate() {
        let prepared: Vec<(Image, Image, u64)> = hq
            .par_iter()
            .enumerate()
            .map(|(i, y)| {
                let mut rng = Rng::derive(cfg.seed, &[k as u64, i as u64]);
                let (w, h) = y.size();
                if w % cfg.scale != 0 || h % cfg.scale != 0 {
                    return Err(SynthError::Indivisible {
                        width: w,
                        height: h,
                        scale: cfg.scale,
                    });
                }
                let target = [w / cfg.scale, h / cfg.scale];
                let sample = degrade::sample_pipeline(kind, &mut rng, &cfg.ranges, [w, h], target)?;
                let x = degrade::apply(y, &sample)?;
                let reference = resize_to(y, target[0], target[1], ResizeFilter::Bicubic)?;
                Ok((x, reference, rng.next_u64()))
            })
            .collect::<Result<_, SynthError>>()?;
        for &t in &cfg.t_grid {
            let chunks: Vec<Vec<Image>> = prepared
                .par_chunks(cfg.batch)
                .map(|chunk| {
                    let xs: Vec<Image> = chunk.iter().map(|p| p.0.clone()).collect();
                    let streams: Vec<(u64, usize)> = chunk.iter().map(|p| (p.2, 0)).collect();
                    denoise_batch(&xs, t, model, sched, &streams, cfg.deterministic_reverse)
                })
                .collect::<Result<_, SynthError>>()?;
            let lq: Vec<Image> = chunks.into_iter().flatten().collect();
            let scores: Vec<f64> = lq
                .iter()
                .zip(&prepared)
                .map(|(l, p)| psnr(&p.1, l))
                .collect::<Result<_, _>>()?;
            let stats = fit_stats(&extract_features(&lq, extractor)?)?;
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            rows.push(CurvePoint {
                pipeline_kind: kind.name().to_string(),
                t,
                frechet: frechet_distance(&stats, real)?,
                psnr_mean: mean,
                psnr_std: var.sqrt(),
                n: scores.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_curves_csv<W: Write>(rows: &[CurvePoint], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<CurvePoint>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}
