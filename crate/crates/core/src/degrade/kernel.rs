use super::DegradeError;

/// Square, odd-sized blur kernel stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    /// Builds a kernel from raw weights, normalizing them to sum 1.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self, DegradeError> {
        if size.is_multiple_of(2) {
            return Err(DegradeError::EvenKernel(size));
        }
        if weights.len() != size * size {
            return Err(DegradeError::BadKernel(format!(
                "{} weights for size {size}",
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum.abs() < 1e-300 {
            return Err(DegradeError::BadKernel(format!("weight sum {sum}")));
        }
        Ok(Kernel2D {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// Identity kernel.
    pub fn delta(size: usize) -> Result<Self, DegradeError> {
        let mut w = vec![0.0; size * size];
        if size % 2 == 1 {
            w[size * size / 2] = 1.0;
        }
        Kernel2D::new(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }
}

/// Rotated anisotropic Gaussian: covariance `R(θ)·diag(σx², σy²)·R(θ)ᵀ`,
/// sampled on the integer grid and normalized.
pub fn anisotropic_gaussian_kernel(
    sigma_x: f64,
    sigma_y: f64,
    theta: f64,
    size: usize,
) -> Result<Kernel2D, DegradeError> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(DegradeError::EvenKernel(size));
    }
    if !(sigma_x > 0.0 && sigma_y > 0.0 && sigma_x.is_finite() && sigma_y.is_finite()) {
        return Err(DegradeError::NonPositiveSigma(sigma_x, sigma_y));
    }
    let (s, c) = theta.sin_cos();
    let (ix, iy) = (1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y));
    // Inverse covariance R·diag(1/σx², 1/σy²)·Rᵀ.
    let a = c * c * ix + s * s * iy;
    let b = c * s * (ix - iy);
    let d = s * s * ix + c * c * iy;
    let r = (size / 2) as f64;
    let mut w = Vec::with_capacity(size * size);
    for row in 0..size {
        let v = row as f64 - r;
        for col in 0..size {
            let u = col as f64 - r;
            w.push((-0.5 * (a * u * u + 2.0 * b * u * v + d * v * v)).exp());
        }
    }
    Kernel2D::new(size, w)
}
