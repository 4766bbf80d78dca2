//! HQ to LQ pair synthesis: degrade, diffuse forward, denoise back, guard.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade::{
    self, resize_to, DegradationRanges, DegradationSample, DegradeError, PipelineKind,
    ResizeFilter,
};
use crate::diffusion::{
    diffuse_from_initial_lq, reverse_chain, DiffusionError, NoisePredictor, NoiseSchedule,
};
use crate::image::Image;
use crate::metrics::{psnr, MetricsError};
use crate::tensor::{Rng, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error("guard rejected the pair after {retries} retries: {measured_db:.2} dB < {guard_db} dB at t={t_used}")]
    GuardRejected {
        retries: usize,
        t_used: usize,
        measured_db: f64,
        guard_db: f64,
    },
    #[error("HQ {width}x{height} is not divisible by scale {scale}")]
    Indivisible {
        width: usize,
        height: usize,
        scale: usize,
    },
    #[error("empty dataset")]
    Empty,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub pipeline: PipelineKind,
    #[serde(default)]
    pub ranges: DegradationRanges,
    /// HQ side divided by LQ side.
    pub scale: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub guard: bool,
    pub psnr_guard_db: f64,
    /// Each retry halves t.
    pub max_retries: usize,
    /// Disables posterior noise during the reverse chain.
    pub deterministic_reverse: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            pipeline: PipelineKind::HighOrder,
            ranges: DegradationRanges::default(),
            scale: 4,
            t_min: 0,
            t_max: 500,
            guard: true,
            psnr_guard_db: 24.0,
            max_retries: 3,
            deterministic_reverse: false,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self, sched: &NoiseSchedule) -> Result<(), SynthError> {
        if self.t_min > self.t_max || self.t_max > sched.t_total() {
            return Err(SynthError::Config(format!(
                "need 0 <= t_min ({}) <= t_max ({}) <= {}",
                self.t_min,
                self.t_max,
                sched.t_total()
            )));
        }
        if self.psnr_guard_db.is_nan() || self.psnr_guard_db < 0.0 {
            return Err(SynthError::Config(format!(
                "guard {} dB must be non-negative",
                self.psnr_guard_db
            )));
        }
        if self.scale == 0 {
            return Err(SynthError::Config("scale must be positive".into()));
        }
        self.ranges.validate()?;
        Ok(())
    }

    pub fn lq_size(&self, hq: &Image) -> Result<[usize; 2], SynthError> {
        let (w, h) = hq.size();
        if w % self.scale != 0 || h % self.scale != 0 {
            return Err(SynthError::Indivisible {
                width: w,
                height: h,
                scale: self.scale,
            });
        }
        Ok([w / self.scale, h / self.scale])
    }
}

/// Everything needed to regenerate one LQ image from its HQ source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub degradation: DegradationSample,
    pub t_drawn: usize,
    pub t_used: usize,
    /// Seeds the forward jump and, unless deterministic, the posterior noise.
    pub diffusion_seed: u64,
    pub retries: usize,
    pub deterministic_reverse: bool,
    /// PSNR against the resized HQ; `None` when the guard is off.
    pub guard_psnr_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardResult {
    pub pass: bool,
    pub measured_db: f64,
}

/// Compares `lq` with `hq` bicubic-resized to the LQ resolution.
pub fn structure_guard(hq: &Image, lq: &Image, guard_db: f64) -> Result<GuardResult, SynthError> {
    let (w, h) = lq.size();
    let reference = resize_to(hq, w, h, ResizeFilter::Bicubic)?;
    let measured_db = psnr(&reference, lq)?;
    Ok(GuardResult {
        pass: measured_db >= guard_db,
        measured_db,
    })
}

/// Jumps `x` (in `[0,1]`) to step `t` and runs the reverse chain back.
/// `t = 0` returns `x` untouched.
pub fn diffuse_and_denoise(
    x: &Image,
    t: usize,
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    seed: u64,
    attempt: usize,
    deterministic: bool,
) -> Result<Image, SynthError> {
    let mut out = denoise_batch(
        std::slice::from_ref(x),
        t,
        model,
        sched,
        &[(seed, attempt)],
        deterministic,
    )?;
    Ok(out.remove(0))
}

/// Batched [`diffuse_and_denoise`]: image `i` draws its jump noise and
/// posterior noise from `streams[i] = (seed, attempt)`, so its result does
/// not depend on the other batch members.
pub fn denoise_batch(
    xs: &[Image],
    t: usize,
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    streams: &[(u64, usize)],
    deterministic: bool,
) -> Result<Vec<Image>, SynthError> {
    if streams.len() != xs.len() {
        return Err(SynthError::Config(format!(
            "{} streams for {} images",
            streams.len(),
            xs.len()
        )));
    }
    if t == 0 || xs.is_empty() {
        return Ok(xs.to_vec());
    }
    let mut parts = Vec::with_capacity(xs.len());
    for (x, &(seed, attempt)) in xs.iter().zip(streams) {
        let mut jump = Rng::derive(seed, &[attempt as u64, 0]);
        parts.push(diffuse_from_initial_lq(&x.to_model_tensor(), t, &mut jump, sched)?.0);
    }
    let x_t = crate::tensor::Tensor::stack(&parts)?;
    let mut noise: Vec<Rng> = streams
        .iter()
        .map(|&(seed, attempt)| Rng::derive(seed, &[attempt as u64, 1]))
        .collect();
    let rngs = if deterministic { None } else { Some(&mut noise[..]) };
    let r = reverse_chain(&x_t, t, model, rngs, sched)?;
    (0..xs.len())
        .map(|i| Ok(Image::from_model_tensor(&r, i)?.clamped()))
        .collect()
}

/// Degrades `hq`, draws `t`, and regenerates the LQ image through the
/// diffusion model, retrying at half the step while the guard fails.
pub fn synthesize_lq(
    hq: &Image,
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    cfg: &SynthesisConfig,
    rng: &mut Rng,
) -> Result<(Image, PairMeta), SynthError> {
    cfg.validate(sched)?;
    let (w, h) = hq.size();
    let degradation =
        degrade::sample_pipeline(cfg.pipeline, rng, &cfg.ranges, [w, h], cfg.lq_size(hq)?)?;
    let t_drawn = rng.rand_uniform_int(cfg.t_min as i64, cfg.t_max as i64) as usize;
    let diffusion_seed = rng.next_u64();
    let x = degrade::apply(hq, &degradation)?;

    let mut t = t_drawn;
    let mut retries = 0;
    loop {
        let lq = diffuse_and_denoise(
            &x,
            t,
            model,
            sched,
            diffusion_seed,
            retries,
            cfg.deterministic_reverse,
        )?;
        if !cfg.guard {
            let meta = PairMeta {
                degradation,
                t_drawn,
                t_used: t,
                diffusion_seed,
                retries,
                deterministic_reverse: cfg.deterministic_reverse,
                guard_psnr_db: None,
            };
            return Ok((lq, meta));
        }
        let g = structure_guard(hq, &lq, cfg.psnr_guard_db)?;
        if g.pass {
            let meta = PairMeta {
                degradation,
                t_drawn,
                t_used: t,
                diffusion_seed,
                retries,
                deterministic_reverse: cfg.deterministic_reverse,
                guard_psnr_db: Some(g.measured_db),
            };
            return Ok((lq, meta));
        }
        if retries == cfg.max_retries || t == 0 {
            return Err(SynthError::GuardRejected {
                retries,
                t_used: t,
                measured_db: g.measured_db,
                guard_db: cfg.psnr_guard_db,
            });
        }
        retries += 1;
        t /= 2;
    }
}

/// Regenerates an LQ image from its recorded metadata.
pub fn replay(
    hq: &Image,
    meta: &PairMeta,
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
) -> Result<Image, SynthError> {
    let x = degrade::apply(hq, &meta.degradation)?;
    diffuse_and_denoise(
        &x,
        meta.t_used,
        model,
        sched,
        meta.diffusion_seed,
        meta.retries,
        meta.deterministic_reverse,
    )
}

/// One HQ source; a load failure is carried through as a rejection.
#[derive(Clone, Debug)]
pub struct HqItem {
    pub name: String,
    pub image: Result<Image, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PairStatus {
    Accepted { meta: PairMeta },
    Rejected { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub status: PairStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub seed: u64,
    pub config: SynthesisConfig,
    pub checkpoint_sha256: Option<String>,
    pub pairs: Vec<PairRecord>,
}

impl PairManifest {
    pub fn accepted(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| matches!(p.status, PairStatus::Accepted { .. }))
            .count()
    }
}

/// Synthesizes a pair for every item on `threads` workers. Item `i` uses the
/// stream `Rng::derive(seed, [i])`, so results do not depend on `threads`.
pub fn batch_synthesize(
    items: &[HqItem],
    model: &dyn NoisePredictor,
    sched: &NoiseSchedule,
    cfg: &SynthesisConfig,
    seed: u64,
    threads: usize,
) -> Result<(PairManifest, Vec<Option<Image>>), SynthError> {
    if items.is_empty() {
        return Err(SynthError::Empty);
    }
    cfg.validate(sched)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| SynthError::Pool(e.to_string()))?;
    let results: Vec<(PairRecord, Option<Image>)> = pool.install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(index, item)| {
                let outcome = match &item.image {
                    Err(e) => Err(format!("load failed: {e}")),
                    Ok(hq) => {
                        let mut rng = Rng::derive(seed, &[index as u64]);
                        synthesize_lq(hq, model, sched, cfg, &mut rng).map_err(|e| e.to_string())
                    }
                };
                let (status, lq) = match outcome {
                    Ok((lq, meta)) => (PairStatus::Accepted { meta }, Some(lq)),
                    Err(reason) => (PairStatus::Rejected { reason }, None),
                };
                let record = PairRecord {
                    index,
                    name: item.name.clone(),
                    status,
                };
                (record, lq)
            })
            .collect()
    });
    let (pairs, images) = results.into_iter().unzip();
    Ok((
        PairManifest {
            seed,
            config: cfg.clone(),
            checkpoint_sha256: None,
            pairs,
        },
        images,
    ))
}
