use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_image, save_image, write_json, IoError};
use crate::degrade::{
    add_gaussian_noise, anisotropic_gaussian_kernel, convolve2d_reflect, jpeg_roundtrip, resize_to,
    ResizeFilter,
};
use crate::image::Image;
use crate::tensor::Rng;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// Relative to the manifest root.
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub seed: u64,
    /// Generator settings, kept for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SeverityProfile>,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_json(path, self)
    }

    pub fn path_of(&self, entry: &DatasetEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Checks for duplicate paths and that every file decodes at its
    /// recorded size.
    pub fn validate(&self) -> Result<(), IoError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(IoError::Manifest(format!("duplicate path {}", e.path)));
            }
        }
        self.entries.par_iter().try_for_each(|e| {
            let img = load_image(&self.path_of(e))?;
            if img.size() != (e.width, e.height) {
                return Err(IoError::Manifest(format!(
                    "{} is {}x{}, manifest says {}x{}",
                    e.path,
                    img.width(),
                    img.height(),
                    e.width,
                    e.height
                )));
            }
            Ok(())
        })
    }

    /// Decodes every entry in `split` (all entries when `None`), in order.
    pub fn load_images(&self, split: Option<&str>) -> Result<Vec<Image>, IoError> {
        self.entries
            .par_iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .map(|e| load_image(&self.path_of(e)))
            .collect()
    }
}

/// Uniformly placed `size`×`size` window.
pub fn random_crop(image: &Image, size: usize, rng: &mut Rng) -> Result<Image, IoError> {
    let (w, h) = image.size();
    if size == 0 || w < size || h < size {
        return Err(IoError::TooSmall {
            width: w,
            height: h,
            size,
        });
    }
    let top = rng.index(h - size + 1);
    let left = rng.index(w - size + 1);
    Ok(image.crop(left, top, size, size))
}

/// Degradation family used to build the target corpus. Its blur and JPEG
/// ranges do not overlap the synthesis defaults (blur σ ≤ 3, quality ≥ 30).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SeverityProfile {
    /// Copies the clean images unchanged.
    None,
    Heavy(HeavyProfile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyProfile {
    pub blur_sigma: [f64; 2],
    pub kernel_size: usize,
    pub noise_sigma: [f64; 2],
    pub jpeg_quality: [u32; 2],
    /// Color noise added after compression, as on a scanned print.
    pub scan_noise_sigma: [f64; 2],
    /// Clean side divided by corpus side.
    pub scale: usize,
}

impl Default for HeavyProfile {
    fn default() -> Self {
        HeavyProfile {
            blur_sigma: [3.5, 5.0],
            kernel_size: 21,
            noise_sigma: [4.0 / 255.0, 12.0 / 255.0],
            jpeg_quality: [10, 25],
            scan_noise_sigma: [8.0 / 255.0, 16.0 / 255.0],
            scale: 2,
        }
    }
}

impl HeavyProfile {
    /// Isotropic blur, bilinear down-resize, color noise, JPEG, color noise.
    pub fn apply(&self, clean: &Image, rng: &mut Rng) -> Result<Image, IoError> {
        let (w, h) = clean.size();
        if self.scale == 0 || w % self.scale != 0 || h % self.scale != 0 {
            return Err(IoError::Manifest(format!(
                "{w}x{h} is not divisible by scale {}",
                self.scale
            )));
        }
        let sigma = rng.uniform_range(self.blur_sigma[0], self.blur_sigma[1]);
        let k = anisotropic_gaussian_kernel(sigma, sigma, 0.0, self.kernel_size)?;
        let blurred = convolve2d_reflect(clean, &k);
        let small = resize_to(&blurred, w / self.scale, h / self.scale, ResizeFilter::Bilinear)?;
        let noise = rng.uniform_range(self.noise_sigma[0], self.noise_sigma[1]);
        let noisy = add_gaussian_noise(&small, noise, false, rng)?;
        let q = rng.rand_uniform_int(self.jpeg_quality[0] as i64, self.jpeg_quality[1] as i64);
        let coded = jpeg_roundtrip(&noisy, q as u32)?;
        let scan = rng.uniform_range(self.scan_noise_sigma[0], self.scan_noise_sigma[1]);
        Ok(add_gaussian_noise(&coded, scan, false, rng)?)
    }
}

/// Degrades each clean image with its own stream `derive(seed, [i])`, writes
/// `lq_{i:05}.png` plus `manifest.json` into `out_dir`.
pub fn make_toy_did(
    clean: &[Image],
    out_dir: &Path,
    profile: &SeverityProfile,
    seed: u64,
) -> Result<DatasetManifest, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;
    let entries = clean
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let out = match profile {
                SeverityProfile::None => img.clone(),
                SeverityProfile::Heavy(p) => p.apply(img, &mut Rng::derive(seed, &[i as u64]))?,
            };
            let name = format!("lq_{i:05}.png");
            save_image(&out, &out_dir.join(&name))?;
            Ok(DatasetEntry {
                path: name,
                width: out.width(),
                height: out.height(),
                split: "train".into(),
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        seed,
        profile: Some(profile.clone()),
        entries,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
