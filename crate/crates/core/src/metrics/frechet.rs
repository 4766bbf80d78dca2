use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Diagonal loading applied to both covariances before the matrix square root.
pub const COV_REGULARIZATION: f64 = 1e-6;

/// Gaussian fit of a feature set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Row-major `d×d` unbiased covariance.
    pub covariance: Vec<f64>,
    pub sample_count: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.dim() + j]
    }

    /// Stats with a given mean and covariance (used for analytic cases).
    pub fn from_parts(
        mean: Vec<f64>,
        covariance: Vec<f64>,
        sample_count: usize,
    ) -> Result<Self, MetricsError> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(MetricsError::DimMismatch(d, covariance.len()));
        }
        Ok(FeatureStats {
            mean,
            covariance,
            sample_count,
        })
    }
}

/// Mean and unbiased covariance of row-per-sample features.
pub fn fit_stats(features: &[Vec<f64>]) -> Result<FeatureStats, MetricsError> {
    if features.len() < 2 {
        return Err(MetricsError::TooFewSamples(features.len()));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(MetricsError::DimMismatch(d, bad.len()));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for f in features {
        for i in 0..d {
            let di = f[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (f[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(FeatureStats {
        mean,
        covariance: cov,
        sample_count: features.len(),
    })
}

fn regularized(s: &FeatureStats) -> DMatrix<f64> {
    let d = s.dim();
    let m = DMatrix::from_row_slice(d, d, &s.covariance);
    // Symmetrize away accumulated rounding before decomposing.
    (&m + m.transpose()) * 0.5 + DMatrix::identity(d, d) * COV_REGULARIZATION
}

fn psd_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricsError> {
    let scale = m.amax().max(1.0);
    let e = SymmetricEigen::new(m);
    let min = e.eigenvalues.min();
    if min < -1e-6 * scale {
        return Err(MetricsError::NotPsd(min));
    }
    Ok(e)
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁^½ Σ₂ Σ₁^½)^½)`.
pub fn frechet_distance(s1: &FeatureStats, s2: &FeatureStats) -> Result<f64, MetricsError> {
    let d = s1.dim();
    if s2.dim() != d {
        return Err(MetricsError::DimMismatch(d, s2.dim()));
    }
    let dm = DVector::from_column_slice(&s1.mean) - DVector::from_column_slice(&s2.mean);
    let a = regularized(s1);
    let b = regularized(s2);
    let ea = psd_eigen(a.clone())?;
    let roots = ea.eigenvalues.map(|l| l.max(0.0).sqrt());
    let sqrt_a = &ea.eigenvectors * DMatrix::from_diagonal(&roots) * ea.eigenvectors.transpose();
    let inner = &sqrt_a * &b * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = psd_eigen(inner)?
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let value = dm.norm_squared() + a.trace() + b.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}
