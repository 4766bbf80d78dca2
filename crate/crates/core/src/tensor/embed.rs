use super::TensorError;

const MAX_PERIOD: f64 = 10_000.0;

/// Sinusoidal encoding of a diffusion step.
///
/// Components are interleaved `[sin(t·ω₀), cos(t·ω₀), sin(t·ω₁), ...]` with
/// angular frequencies spaced geometrically from 1 down to 1/10000.
pub fn sinusoidal_time_embedding(t: f64, dim: usize) -> Result<Vec<f64>, TensorError> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(TensorError::Invalid(format!(
            "time embedding dim must be even and positive, got {dim}"
        )));
    }
    if t < 0.0 {
        return Err(TensorError::Invalid(format!("negative step {t}")));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let frac = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let omega = MAX_PERIOD.powf(-frac);
        out.push((t * omega).sin());
        out.push((t * omega).cos());
    }
    Ok(out)
}
