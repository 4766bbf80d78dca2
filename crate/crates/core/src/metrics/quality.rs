use super::MetricsError;
use crate::image::Image;

/// Value reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_shapes(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// PSNR in dB for pixel range `[0, 1]`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    psnr_with_peak(a, b, 1.0)
}

pub fn psnr_with_peak(a: &Image, b: &Image, max_val: f64) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(psnr_from_mse(mse, max_val))
}

pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (max_val * max_val / mse).log10()).min(PSNR_CAP_DB)
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a `w`×`h` plane with a 1-D window.
fn filter_valid(plane: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| win[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| win[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of the luma planes over every fully contained window position.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let (w, h) = a.size();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
            min: SSIM_WINDOW,
        });
    }
    let (x, y) = (a.luma(), b.luma());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let win = gaussian_window();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &win));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (m1, m2) = (mx[i], my[i]);
            let v1 = sxx[i] - m1 * m1;
            let v2 = syy[i] - m2 * m2;
            let cov = sxy[i] - m1 * m2;
            ((2.0 * m1 * m2 + c1) * (2.0 * cov + c2))
                / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}
