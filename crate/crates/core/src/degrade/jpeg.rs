//! In-memory baseline JPEG round trip: 8×8 DCT, table quantization, 4:4:4.
//! Entropy coding is lossless and therefore skipped.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::DegradeError;
use crate::image::Image;

/// Luminance quantization table (natural row-major order).
#[rustfmt::skip]
pub const LUMA_BASE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Chrominance quantization table (natural row-major order).
#[rustfmt::skip]
pub const CHROMA_BASE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Scales a base table with the usual quality mapping, entries clamped to 1..=255.
pub fn quantization_table(base: &[u16; 64], quality: u32) -> Result<[u16; 64], DegradeError> {
    if !(1..=100).contains(&quality) {
        return Err(DegradeError::InvalidQuality(quality));
    }
    let s = if quality < 50 {
        5000 / quality
    } else {
        200 - 2 * quality
    };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * s + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(out)
}

/// `M[u][x] = C(u)/2 · cos((2x+1)uπ/16)`, so the 2-D transform is `M·B·Mᵀ`.
fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let cu = if u == 0 { 0.5f64.sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * cu * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| m[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| m[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| m[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| m[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

fn to_byte(v: f64) -> f64 {
    v.round().clamp(0.0, 255.0)
}

/// Lossy-codes one plane (0..255 range) in place. The decoded samples stay
/// unrounded so that only the final conversion quantizes.
fn code_plane(plane: &mut [f64], width: usize, height: usize, table: &[u16; 64]) {
    let mut decoded = vec![0.0; plane.len()];
    for by in (0..height).step_by(8) {
        for bx in (0..width).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                // Partial edge blocks replicate the last row/column.
                let sy = (by + y).min(height - 1);
                for x in 0..8 {
                    let sx = (bx + x).min(width - 1);
                    block[y * 8 + x] = plane[sy * width + sx] - 128.0;
                }
            }
            let mut coef = fdct(&block);
            for (c, &q) in coef.iter_mut().zip(table) {
                *c = (*c / q as f64).round() * q as f64;
            }
            let rec = idct(&coef);
            for y in 0..8.min(height - by) {
                for x in 0..8.min(width - bx) {
                    decoded[(by + y) * width + bx + x] = (rec[y * 8 + x] + 128.0).clamp(0.0, 255.0);
                }
            }
        }
    }
    plane.copy_from_slice(&decoded);
}

/// Encodes and decodes `image` at `quality` (1..=100). Single-channel images
/// are coded as luma only; RGB goes through the JFIF YCbCr transform.
pub fn jpeg_roundtrip(image: &Image, quality: u32) -> Result<Image, DegradeError> {
    let luma_q = quantization_table(&LUMA_BASE, quality)?;
    let chroma_q = quantization_table(&CHROMA_BASE, quality)?;
    let (w, h) = image.size();
    let n = w * h;
    let bytes: Vec<f64> = image
        .data()
        .iter()
        .map(|&v| to_byte(v.clamp(0.0, 1.0) as f64 * 255.0))
        .collect();
    let out = match image.channels() {
        1 => {
            let mut y = bytes;
            code_plane(&mut y, w, h, &luma_q);
            y.into_iter().map(to_byte).collect()
        }
        3 => {
            let (r, g, b) = (&bytes[..n], &bytes[n..2 * n], &bytes[2 * n..]);
            let mut yy = vec![0.0; n];
            let mut cb = vec![0.0; n];
            let mut cr = vec![0.0; n];
            for i in 0..n {
                yy[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
                cb[i] = -0.168736 * r[i] - 0.331264 * g[i] + 0.5 * b[i] + 128.0;
                cr[i] = 0.5 * r[i] - 0.418688 * g[i] - 0.081312 * b[i] + 128.0;
            }
            code_plane(&mut yy, w, h, &luma_q);
            code_plane(&mut cb, w, h, &chroma_q);
            code_plane(&mut cr, w, h, &chroma_q);
            let mut rgb = vec![0.0; 3 * n];
            for i in 0..n {
                let (y, u, v) = (yy[i], cb[i] - 128.0, cr[i] - 128.0);
                rgb[i] = to_byte(y + 1.402 * v);
                rgb[n + i] = to_byte(y - 0.344136 * u - 0.714136 * v);
                rgb[2 * n + i] = to_byte(y + 1.772 * u);
            }
            rgb
        }
        c => return Err(DegradeError::UnsupportedChannels(c)),
    };
    Ok(Image::from_planar(
        w,
        h,
        image.channels(),
        out.into_iter().map(|v| (v / 255.0) as f32).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_is_orthonormal() {
        let mut block = [0.0; 64];
        for (i, v) in block.iter_mut().enumerate() {
            *v = ((i * 37) % 255) as f64 - 128.0;
        }
        let back = idct(&fdct(&block));
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_of_constant_block() {
        let coef = fdct(&[10.0; 64]);
        assert!((coef[0] - 80.0).abs() < 1e-9);
        assert!(coef[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn quality_mapping_endpoints() {
        assert!(quantization_table(&LUMA_BASE, 100).unwrap().iter().all(|&q| q == 1));
        assert_eq!(quantization_table(&LUMA_BASE, 50).unwrap(), LUMA_BASE);
        assert!(quantization_table(&LUMA_BASE, 1).unwrap().iter().all(|&q| q == 255));
        assert!(quantization_table(&LUMA_BASE, 0).is_err());
        assert!(quantization_table(&LUMA_BASE, 101).is_err());
    }
}
