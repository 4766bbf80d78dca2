use std::path::Path;

use super::IoError;
use crate::image::Image;

/// Decodes a PNG as 8-bit RGB with values `u/255`.
pub fn load_image(path: &Path) -> Result<Image, IoError> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| IoError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IoError::io(path, e))?
        .decode()
        .map_err(|e| IoError::Decode {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    Ok(from_rgb8(&decoded.to_rgb8()))
}

pub fn from_rgb8(rgb: &image::RgbImage) -> Image {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    Image::from_fn(w, h, 3, |c, y, x| raw[(y * w + x) * 3 + c] as f32 / 255.0)
}

/// `round_half_even(255·v)` after clamping to `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Interleaved RGB bytes; 1-channel images are replicated to gray RGB.
pub fn to_rgb8(image: &Image) -> Result<image::RgbImage, IoError> {
    let (w, h) = image.size();
    let c = image.channels();
    if c != 1 && c != 3 {
        return Err(IoError::Encode(format!("cannot store {c} channels as RGB")));
    }
    let mut raw = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                raw.push(quantize(image.get(ch.min(c - 1), y, x)));
            }
        }
    }
    image::RgbImage::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| IoError::Encode("buffer size mismatch".into()))
}

/// Writes an 8-bit RGB PNG, creating parent directories.
pub fn save_image(image: &Image, path: &Path) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    to_rgb8(image)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IoError::Encode(format!("{}: {e}", path.display())))
}
