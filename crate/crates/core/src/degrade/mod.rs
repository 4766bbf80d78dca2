//! Handcrafted degradation models: blur, resampling, noise, JPEG, and the
//! four pipeline families built from them.

mod filter;
mod jpeg;
mod kernel;
mod noise;
mod pipeline;
mod resize;

pub use filter::convolve2d_reflect;
pub use jpeg::{jpeg_roundtrip, quantization_table, CHROMA_BASE, LUMA_BASE};
pub use kernel::{anisotropic_gaussian_kernel, Kernel2D};
pub use noise::add_gaussian_noise;
pub use pipeline::{
    apply, sample_pipeline, DegradationRanges, DegradationSample, PipelineKind, StageSpec,
};
pub use resize::{resize, resize_to, ResizeFilter};

#[derive(Debug, thiserror::Error)]
pub enum DegradeError {
    #[error("kernel size must be odd and positive, got {0}")]
    EvenKernel(usize),
    #[error("kernel weights: {0}")]
    BadKernel(String),
    #[error("sigma must be positive and finite, got ({0}, {1})")]
    NonPositiveSigma(f64, f64),
    #[error("noise sigma must be non-negative and finite, got {0}")]
    NegativeNoise(f64),
    #[error("resize scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("degenerate resize output {width}x{height}")]
    DegenerateSize { width: usize, height: usize },
    #[error("jpeg quality must be in 1..=100, got {0}")]
    InvalidQuality(u32),
    #[error("jpeg supports 1 or 3 channels, got {0}")]
    UnsupportedChannels(usize),
    #[error("invalid degradation range: {0}")]
    InvalidRange(String),
    #[error("pipeline produced {got:?}, expected target {expected:?}")]
    TargetMismatch {
        expected: [usize; 2],
        got: [usize; 2],
    },
}
