//! Core algorithms for diffusion-based synthesis of degraded training pairs.

pub mod degrade;
pub mod denoiser;
pub mod diffusion;
pub mod image;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod tensor;

pub use image::Image;
