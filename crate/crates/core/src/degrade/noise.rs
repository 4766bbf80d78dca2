use super::DegradeError;
use crate::image::Image;
use crate::tensor::Rng;

/// Additive white Gaussian noise in intensity units, clamped to `[0, 1]`.
/// With `gray`, one noise field is shared by every channel.
pub fn add_gaussian_noise(
    image: &Image,
    sigma: f64,
    gray: bool,
    rng: &mut Rng,
) -> Result<Image, DegradeError> {
    let mut out = add_unclamped(image, sigma, gray, rng)?;
    out.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(out)
}

fn add_unclamped(
    image: &Image,
    sigma: f64,
    gray: bool,
    rng: &mut Rng,
) -> Result<Image, DegradeError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DegradeError::NegativeNoise(sigma));
    }
    let mut out = image.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let plane = image.width() * image.height();
    if gray {
        let field: Vec<f64> = (0..plane).map(|_| sigma * rng.normal()).collect();
        for c in 0..image.channels() {
            for (v, n) in out.plane_mut(c).iter_mut().zip(&field) {
                *v = (*v as f64 + n) as f32;
            }
        }
    } else {
        for v in out.data_mut() {
            *v = (*v as f64 + sigma * rng.normal()) as f32;
        }
    }
    Ok(out)
}
