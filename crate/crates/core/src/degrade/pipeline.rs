use serde::{Deserialize, Serialize};

use super::{
    add_gaussian_noise, anisotropic_gaussian_kernel, convolve2d_reflect, jpeg_roundtrip, resize,
    resize_to, DegradeError, ResizeFilter,
};
use crate::image::Image;
use crate::tensor::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Bicubic,
    Classical,
    Shuffle,
    HighOrder,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [
        PipelineKind::Bicubic,
        PipelineKind::Classical,
        PipelineKind::Shuffle,
        PipelineKind::HighOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Bicubic => "bicubic",
            PipelineKind::Classical => "classical",
            PipelineKind::Shuffle => "shuffle",
            PipelineKind::HighOrder => "high_order",
        }
    }
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        if norm == "highorder" {
            return Ok(PipelineKind::HighOrder);
        }
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown pipeline kind `{s}`"))
    }
}

/// One parameterized degradation stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StageSpec {
    Blur {
        sigma_x: f64,
        sigma_y: f64,
        theta: f64,
        size: usize,
    },
    /// `size` (width, height), when present, overrides rounding of `scale`.
    Resize {
        scale: f64,
        filter: ResizeFilter,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size: Option<[usize; 2]>,
    },
    GaussianNoise {
        sigma: f64,
        gray: bool,
    },
    Jpeg {
        quality: u32,
    },
}

impl StageSpec {
    pub fn op_name(&self) -> &'static str {
        match self {
            StageSpec::Blur { .. } => "blur",
            StageSpec::Resize { .. } => "resize",
            StageSpec::GaussianNoise { .. } => "gaussian_noise",
            StageSpec::Jpeg { .. } => "jpeg",
        }
    }

    pub fn apply(&self, image: &Image, rng: &mut Rng) -> Result<Image, DegradeError> {
        match *self {
            StageSpec::Blur {
                sigma_x,
                sigma_y,
                theta,
                size,
            } => {
                let k = anisotropic_gaussian_kernel(sigma_x, sigma_y, theta, size)?;
                Ok(convolve2d_reflect(image, &k))
            }
            StageSpec::Resize {
                scale,
                filter,
                size,
            } => match size {
                Some([w, h]) => resize_to(image, w, h, filter),
                None => resize(image, scale, filter),
            },
            StageSpec::GaussianNoise { sigma, gray } => add_gaussian_noise(image, sigma, gray, rng),
            StageSpec::Jpeg { quality } => jpeg_roundtrip(image, quality),
        }
    }
}

/// A fully drawn degradation: applying it to an image is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSample {
    pub kind: PipelineKind,
    pub stages: Vec<StageSpec>,
    pub seed: u64,
    /// Output (width, height).
    pub target: [usize; 2],
}

/// Sampling ranges; `[lo, hi]` pairs are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRanges {
    pub blur_sigma: [f64; 2],
    pub kernel_size: [usize; 2],
    pub theta: [f64; 2],
    pub downscale: [f64; 2],
    pub noise_sigma: [f64; 2],
    pub gray_noise_prob: f64,
    pub jpeg_quality: [u32; 2],
    pub second_round_attenuation: f64,
    pub second_round_prob: f64,
    pub resize_filters: Vec<ResizeFilter>,
}

impl Default for DegradationRanges {
    fn default() -> Self {
        DegradationRanges {
            blur_sigma: [0.2, 3.0],
            kernel_size: [7, 21],
            theta: [0.0, std::f64::consts::PI],
            downscale: [1.0, 4.0],
            noise_sigma: [1.0 / 255.0, 30.0 / 255.0],
            gray_noise_prob: 0.4,
            jpeg_quality: [30, 95],
            second_round_attenuation: 0.5,
            second_round_prob: 0.8,
            resize_filters: vec![
                ResizeFilter::Area,
                ResizeFilter::Bilinear,
                ResizeFilter::Bicubic,
            ],
        }
    }
}

impl DegradationRanges {
    pub fn validate(&self) -> Result<(), DegradeError> {
        let bad = |m: &str| Err(DegradeError::InvalidRange(m.to_string()));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.blur_sigma) || self.blur_sigma[0] <= 0.0 {
            return bad("blur_sigma must be positive with lo <= hi");
        }
        let [klo, khi] = self.kernel_size;
        if klo % 2 == 0 || khi % 2 == 0 || klo > khi {
            return bad("kernel_size bounds must be odd with lo <= hi");
        }
        if !ordered(self.theta) {
            return bad("theta must have lo <= hi");
        }
        if !ordered(self.downscale) || self.downscale[0] < 1.0 {
            return bad("downscale must be >= 1 with lo <= hi");
        }
        if !ordered(self.noise_sigma) || self.noise_sigma[0] < 0.0 {
            return bad("noise_sigma must be non-negative with lo <= hi");
        }
        let [qlo, qhi] = self.jpeg_quality;
        if qlo < 1 || qhi > 100 || qlo > qhi {
            return bad("jpeg_quality must lie in 1..=100 with lo <= hi");
        }
        for (name, p) in [
            ("gray_noise_prob", self.gray_noise_prob),
            ("second_round_prob", self.second_round_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DegradeError::InvalidRange(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.second_round_attenuation > 0.0 && self.second_round_attenuation <= 1.0) {
            return bad("second_round_attenuation must lie in (0, 1]");
        }
        if self.resize_filters.is_empty() {
            return bad("resize_filters is empty");
        }
        Ok(())
    }

    fn blur(&self, rng: &mut Rng, atten: f64) -> StageSpec {
        let [lo, hi] = self.blur_sigma.map(|s| s * atten);
        let [klo, khi] = self.kernel_size;
        StageSpec::Blur {
            sigma_x: rng.uniform_range(lo, hi),
            sigma_y: rng.uniform_range(lo, hi),
            theta: rng.uniform_range(self.theta[0], self.theta[1]),
            size: klo + 2 * rng.index((khi - klo) / 2 + 1),
        }
    }

    fn noise(&self, rng: &mut Rng, atten: f64) -> StageSpec {
        let [lo, hi] = self.noise_sigma.map(|s| s * atten);
        StageSpec::GaussianNoise {
            sigma: rng.uniform_range(lo, hi),
            gray: rng.bernoulli(self.gray_noise_prob),
        }
    }

    fn jpeg(&self, rng: &mut Rng) -> StageSpec {
        let [lo, hi] = self.jpeg_quality;
        StageSpec::Jpeg {
            quality: rng.rand_uniform_int(lo as i64, hi as i64) as u32,
        }
    }

    fn filter(&self, rng: &mut Rng) -> ResizeFilter {
        self.resize_filters[rng.index(self.resize_filters.len())]
    }

    /// Resize by `1/factor` from `from`, returning the stage and the new size.
    fn downscale_stage(&self, rng: &mut Rng, from: [usize; 2], factor: f64) -> (StageSpec, [usize; 2]) {
        let size = from.map(|n| ((n as f64 / factor).round() as usize).max(1));
        let stage = StageSpec::Resize {
            scale: 1.0 / factor,
            filter: self.filter(rng),
            size: Some(size),
        };
        (stage, size)
    }

    fn classical_round(&self, rng: &mut Rng, input: [usize; 2], target: [usize; 2]) -> Vec<StageSpec> {
        vec![
            self.blur(rng, 1.0),
            self.to_target(rng, input, target),
            self.noise(rng, 1.0),
            self.jpeg(rng),
        ]
    }

    fn to_target(&self, rng: &mut Rng, from: [usize; 2], target: [usize; 2]) -> StageSpec {
        StageSpec::Resize {
            scale: target[0] as f64 / from[0] as f64,
            filter: self.filter(rng),
            size: Some(target),
        }
    }
}

/// Draws a degradation of the given family taking `input` (width, height) to
/// `target`. Everything random about the result is fixed in the returned value.
pub fn sample_pipeline(
    kind: PipelineKind,
    rng: &mut Rng,
    ranges: &DegradationRanges,
    input: [usize; 2],
    target: [usize; 2],
) -> Result<DegradationSample, DegradeError> {
    ranges.validate()?;
    if input.contains(&0) || target.contains(&0) {
        return Err(DegradeError::DegenerateSize {
            width: target[0],
            height: target[1],
        });
    }
    let seed = rng.next_u64();
    let stages = match kind {
        PipelineKind::Bicubic => vec![StageSpec::Resize {
            scale: target[0] as f64 / input[0] as f64,
            filter: ResizeFilter::Bicubic,
            size: Some(target),
        }],
        PipelineKind::Classical => ranges.classical_round(rng, input, target),
        PipelineKind::Shuffle => {
            let mut core = vec![
                ranges.blur(rng, 1.0),
                ranges.to_target(rng, input, target),
                ranges.noise(rng, 1.0),
            ];
            rng.shuffle(&mut core);
            core.push(ranges.jpeg(rng));
            core
        }
        PipelineKind::HighOrder => {
            // Round one draws exactly what a Classical sample would.
            let mut stages = ranges.classical_round(rng, input, target);
            let mut size = target;
            if rng.bernoulli(ranges.second_round_prob) {
                let atten = ranges.second_round_attenuation;
                let [dlo, dhi] = ranges.downscale;
                let f2 = rng.uniform_range(dlo, dlo + (dhi - dlo) * atten);
                stages.push(ranges.blur(rng, atten));
                let (resize2, next) = ranges.downscale_stage(rng, size, f2);
                size = next;
                stages.push(resize2);
                stages.push(ranges.noise(rng, atten));
                stages.push(ranges.jpeg(rng));
            }
            stages.push(ranges.to_target(rng, size, target));
            stages.push(ranges.jpeg(rng));
            stages
        }
    };
    Ok(DegradationSample {
        kind,
        stages,
        seed,
        target,
    })
}

/// Runs the stages in order. Stage `i` draws its randomness from a stream
/// derived from `(sample.seed, i)`, so the sample alone fixes the output.
pub fn apply(image: &Image, sample: &DegradationSample) -> Result<Image, DegradeError> {
    let mut cur = image.clone();
    for (i, stage) in sample.stages.iter().enumerate() {
        let mut rng = Rng::derive(sample.seed, &[i as u64]);
        cur = stage.apply(&cur, &mut rng)?;
    }
    let got = [cur.width(), cur.height()];
    if got != sample.target {
        return Err(DegradeError::TargetMismatch {
            expected: sample.target,
            got,
        });
    }
    Ok(cur)
}
