//! Image quality metrics and distribution distances.

mod features;
mod frechet;
mod quality;
mod sweep;

pub use features::{extract_features, ExtractorKind, FeatureExtractor, PatchStats, GRAD_BINS};
pub use frechet::{fit_stats, frechet_distance, FeatureStats, COV_REGULARIZATION};
pub use quality::{psnr, psnr_from_mse, psnr_with_peak, ssim, PSNR_CAP_DB};
pub use sweep::{
    read_curves_csv, spearman, sweep_curves, write_curves_csv, CurvePoint, SweepConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("image {width}x{height} is smaller than the minimum {min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("covariance is not positive semi-definite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("invalid extractor configuration: {0}")]
    Config(String),
    #[error("feature extraction failed: {0}")]
    Extraction(String),
}
