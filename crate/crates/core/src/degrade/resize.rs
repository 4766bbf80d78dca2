use serde::{Deserialize, Serialize};

use super::DegradeError;
use crate::image::Image;

/// Keys cubic convolution parameter.
const KEYS_A: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    Bicubic,
    Bilinear,
    Nearest,
    Area,
}

impl ResizeFilter {
    pub const ALL: [ResizeFilter; 4] = [
        ResizeFilter::Bicubic,
        ResizeFilter::Bilinear,
        ResizeFilter::Nearest,
        ResizeFilter::Area,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResizeFilter::Bicubic => "bicubic",
            ResizeFilter::Bilinear => "bilinear",
            ResizeFilter::Nearest => "nearest",
            ResizeFilter::Area => "area",
        }
    }
}

impl std::str::FromStr for ResizeFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResizeFilter::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown resize filter `{s}`"))
    }
}

fn keys_cubic(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((KEYS_A + 2.0) * x - (KEYS_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((KEYS_A * x - 5.0 * KEYS_A) * x + 8.0 * KEYS_A) * x - 4.0 * KEYS_A
    } else {
        0.0
    }
}

fn triangle(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Contributions of input samples to one output sample.
struct Taps {
    start: usize,
    weights: Vec<f64>,
}

fn axis_taps(in_len: usize, out_len: usize, filter: ResizeFilter) -> Vec<Taps> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| match filter {
            ResizeFilter::Nearest => {
                let src = (((i as f64 + 0.5) * scale).floor() as usize).min(in_len - 1);
                Taps {
                    start: src,
                    weights: vec![1.0],
                }
            }
            ResizeFilter::Area => {
                // Exact overlap of the output cell [i·s, (i+1)·s) with each input cell.
                let (a, b) = (i as f64 * scale, (i + 1) as f64 * scale);
                let start = (a.floor() as usize).min(in_len - 1);
                let end = (b.ceil() as usize).clamp(start + 1, in_len);
                let weights = (start..end)
                    .map(|j| (b.min(j as f64 + 1.0) - a.max(j as f64)).max(0.0))
                    .collect();
                normalized(start, weights)
            }
            ResizeFilter::Bilinear | ResizeFilter::Bicubic => {
                let (kernel, support): (fn(f64) -> f64, f64) = match filter {
                    ResizeFilter::Bilinear => (triangle, 1.0),
                    _ => (keys_cubic, 2.0),
                };
                // Widen the kernel when minifying so it low-passes.
                let fscale = scale.max(1.0);
                let center = (i as f64 + 0.5) * scale;
                let reach = support * fscale;
                let start = ((center - reach).floor().max(0.0) as usize).min(in_len - 1);
                let end = ((center + reach).ceil() as usize).clamp(start + 1, in_len);
                let weights = (start..end)
                    .map(|j| kernel((j as f64 + 0.5 - center) / fscale))
                    .collect();
                normalized(start, weights)
            }
        })
        .collect()
}

fn normalized(start: usize, mut weights: Vec<f64>) -> Taps {
    let sum: f64 = weights.iter().sum();
    if sum.abs() > 1e-12 {
        weights.iter_mut().for_each(|w| *w /= sum);
    } else {
        weights = vec![1.0];
    }
    Taps { start, weights }
}

/// Resizes by `scale`; output side = `round(input·scale)`, at least 1.
pub fn resize(image: &Image, scale: f64, filter: ResizeFilter) -> Result<Image, DegradeError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DegradeError::InvalidScale(scale));
    }
    let side = |n: usize| ((n as f64 * scale).round() as usize).max(1);
    let (w, h) = (side(image.width()), side(image.height()));
    resize_to(image, w, h, filter)
}

/// Separable resampling to an explicit size. Output is clamped to `[0, 1]`.
pub fn resize_to(
    image: &Image,
    width: usize,
    height: usize,
    filter: ResizeFilter,
) -> Result<Image, DegradeError> {
    // Guards against sizes that would exhaust memory.
    const MAX_SIDE: usize = 1 << 15;
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(DegradeError::DegenerateSize { width, height });
    }
    let (iw, ih) = image.size();
    let xt = axis_taps(iw, width, filter);
    let yt = axis_taps(ih, height, filter);
    let mut out = Image::new(width, height, image.channels());
    let mut tmp = vec![0.0f64; ih * width];
    for c in 0..image.channels() {
        let src = image.plane(c);
        for y in 0..ih {
            let row = &src[y * iw..(y + 1) * iw];
            for (x, t) in xt.iter().enumerate() {
                tmp[y * width + x] = t
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * row[t.start + k] as f64)
                    .sum();
            }
        }
        let dst = out.plane_mut(c);
        for (y, t) in yt.iter().enumerate() {
            for x in 0..width {
                let v: f64 = t
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * tmp[(t.start + k) * width + x])
                    .sum();
                dst[y * width + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(out)
}
