//! Image files, checkpoints, manifests, toy corpora, configuration.

mod checkpoint;
mod config;
mod dataset;
mod png;
mod procedural;
mod training;

use std::path::Path;

pub use checkpoint::{sha256_hex, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::parse_config;
pub use dataset::{
    make_toy_did, random_crop, DatasetEntry, DatasetManifest, HeavyProfile, SeverityProfile,
    MANIFEST_FILE,
};
pub use png::{from_rgb8, load_image, quantize, save_image, to_rgb8};
pub use procedural::{procedural_image, procedural_set};
pub use training::{train_on_images, TrainRun};

use crate::degrade::DegradeError;
use crate::denoiser::DenoiserError;
use crate::diffusion::DiffusionError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {msg}")]
    Decode { path: String, msg: String },
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("image {width}x{height} smaller than crop {size}")]
    TooSmall {
        width: usize,
        height: usize,
        size: usize,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Pretty JSON with a trailing newline; creates parent directories.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| IoError::io(path, e))
}
