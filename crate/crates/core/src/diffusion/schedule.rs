use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Diffusion hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub t_total: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Default upper bound of the synthesis step for face-like data.
    pub t_max_face: usize,
    /// Default upper bound of the synthesis step for natural images.
    pub t_max_natural: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            t_total: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            t_max_face: 500,
            t_max_natural: 250,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(0.0 < self.beta_start && self.beta_start < self.beta_end && self.beta_end < 1.0) {
            return Err(DiffusionError::Schedule(format!(
                "need 0 < beta_start < beta_end < 1, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        if self.t_total == 0 {
            return Err(DiffusionError::Schedule("T must be positive".into()));
        }
        for t in [self.t_max_face, self.t_max_natural] {
            if t > self.t_total {
                return Err(DiffusionError::StepOutOfRange {
                    t,
                    t_total: self.t_total,
                });
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, DiffusionError> {
        self.validate()?;
        linear_schedule(self.t_total, self.beta_start, self.beta_end)
    }
}

/// Precomputed per-step quantities. Every table is indexed by the 1-based
/// step `t ∈ 1..=T`; index 0 holds the `t = 0` convention (`ᾱ₀ = 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    t_total: usize,
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sqrt_alpha_bar: Vec<f64>,
    sqrt_one_minus_alpha_bar: Vec<f64>,
    coef_x0: Vec<f64>,
    coef_xt: Vec<f64>,
    posterior_variance: Vec<f64>,
}

/// β linear from `beta_start` (t = 1) to `beta_end` (t = T).
pub fn linear_schedule(
    t_total: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, DiffusionError> {
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(DiffusionError::Schedule(format!(
            "need 0 < beta_start < beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    if t_total == 0 {
        return Err(DiffusionError::Schedule("T must be positive".into()));
    }
    let n = t_total + 1;
    let mut beta = vec![0.0; n];
    for (t, b) in beta.iter_mut().enumerate().skip(1) {
        let frac = if t_total == 1 {
            0.0
        } else {
            (t - 1) as f64 / (t_total - 1) as f64
        };
        *b = beta_start + (beta_end - beta_start) * frac;
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = vec![1.0; n];
    for t in 1..n {
        alpha_bar[t] = alpha_bar[t - 1] * alpha[t];
    }
    let mut coef_x0 = vec![0.0; n];
    let mut coef_xt = vec![0.0; n];
    let mut posterior_variance = vec![0.0; n];
    for t in 1..n {
        let denom = 1.0 - alpha_bar[t];
        coef_x0[t] = beta[t] * alpha_bar[t - 1].sqrt() / denom;
        coef_xt[t] = (1.0 - alpha_bar[t - 1]) * alpha[t].sqrt() / denom;
        posterior_variance[t] = beta[t] * (1.0 - alpha_bar[t - 1]) / denom;
    }
    Ok(NoiseSchedule {
        t_total,
        beta_start,
        beta_end,
        sqrt_alpha_bar: alpha_bar.iter().map(|a| a.sqrt()).collect(),
        sqrt_one_minus_alpha_bar: alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect(),
        beta,
        alpha,
        alpha_bar,
        coef_x0,
        coef_xt,
        posterior_variance,
    })
}

impl NoiseSchedule {
    pub fn t_total(&self) -> usize {
        self.t_total
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    /// Errors unless `t ≤ T`.
    pub fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t > self.t_total {
            return Err(DiffusionError::StepOutOfRange {
                t,
                t_total: self.t_total,
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sqrt_alpha_bar(&self, t: usize) -> f64 {
        self.sqrt_alpha_bar[t]
    }

    pub fn sqrt_one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.sqrt_one_minus_alpha_bar[t]
    }

    pub fn posterior_mean_coef_x0(&self, t: usize) -> f64 {
        self.coef_x0[t]
    }

    pub fn posterior_mean_coef_xt(&self, t: usize) -> f64 {
        self.coef_xt[t]
    }

    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_variance[t]
    }
}
