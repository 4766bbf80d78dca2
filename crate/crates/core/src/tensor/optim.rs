//! Named parameter sets, Adam and weight EMA.

use std::collections::BTreeMap;

use super::dense::Tensor;
use super::scalar::Scalar;
use super::TensorError;

/// Parameters keyed by unique name; iteration order is name-sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Scalar = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet {
            tensors: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<(), TensorError> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(TensorError::Invalid(format!("duplicate parameter {name}")));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Fails unless `other` has the same names with the same dims.
    pub fn check_congruent(&self, other: &ParamSet<T>) -> Result<(), TensorError> {
        if self.tensors.len() != other.tensors.len() {
            return Err(TensorError::Invalid(format!(
                "parameter count mismatch: {} vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (name, t) in &self.tensors {
            let o = other
                .get(name)
                .ok_or_else(|| TensorError::Invalid(format!("missing parameter {name}")))?;
            if o.dims() != t.dims() {
                return Err(TensorError::Shape {
                    op: "parameter set",
                    expected: t.dims(),
                    got: o.dims(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 8e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moments are kept per parameter name.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    step: u64,
    first: ParamSet<T>,
    second: ParamSet<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: ParamSet::new(),
            second: ParamSet::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter that has an entry in `grads`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<(), TensorError> {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / bc1);
        let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
        let eps = T::of(c.eps);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.dims() != p.dims() {
                return Err(TensorError::Shape {
                    op: "adam",
                    expected: p.dims(),
                    got: g.dims(),
                });
            }
            if self.first.get(name).is_none() {
                self.first.insert(name.clone(), Tensor::zeros(p.dims()))?;
                self.second.insert(name.clone(), Tensor::zeros(p.dims()))?;
            }
            let m = self.first.get_mut(name).expect("inserted above");
            let v = self.second.get_mut(name).expect("inserted above");
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + ob1 * gv;
                *vv = b2 * *vv + ob2 * gv * gv;
                *pv -= step_size * *mv / ((*vv).sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

/// `ema ← decay·ema + (1 − decay)·live`, element-wise. Evaluated as
/// `ema + (1 − decay)·(live − ema)` so equal weights stay bit-identical.
pub fn ema_update<T: Scalar>(
    ema: &mut ParamSet<T>,
    live: &ParamSet<T>,
    decay: f64,
) -> Result<(), TensorError> {
    if !(0.0..1.0).contains(&decay) || decay == 0.0 {
        return Err(TensorError::Invalid(format!("EMA decay {decay} outside (0, 1)")));
    }
    ema.check_congruent(live)?;
    let od = T::of(1.0 - decay);
    for (name, m) in ema.iter_mut() {
        let w = live.get(name).expect("congruent sets");
        m.data_mut()
            .iter_mut()
            .zip(w.data())
            .for_each(|(mv, &wv)| *mv += od * (wv - *mv));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn single(name: &str, v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::full(Dims::new(1, 1, 1, 4), v)).unwrap();
        p
    }

    #[test]
    fn first_adam_step_moves_by_lr_against_gradient_sign() {
        let lr = 8e-5;
        let mut p = single("w", 0.5);
        let g = single("w", 3.0);
        let mut adam = Adam::new(AdamConfig { lr, ..Default::default() });
        adam.step(&mut p, &g).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        let moved = p.get("w").unwrap().data()[0] - 0.5;
        assert!((moved + lr).abs() < 1e-10, "moved {moved}");
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = single("w", 0.25);
        let g = single("w", 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut p, &g).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data()[0], 0.25);
    }

    #[test]
    fn default_learning_rate_is_8e_minus_5() {
        assert_eq!(AdamConfig::default().lr, 8e-5);
    }

    #[test]
    fn ema_single_step_from_zero() {
        let mut m = single("w", 0.0);
        ema_update(&mut m, &single("w", 1.0), 0.995).unwrap();
        assert!((m.get("w").unwrap().data()[0] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn ema_geometric_decay_identity() {
        let mut m = single("w", 0.0);
        let w = single("w", 1.0);
        for k in 1..=50 {
            ema_update(&mut m, &w, 0.995).unwrap();
            let gap = 1.0 - m.get("w").unwrap().data()[0];
            assert!((gap - 0.995f64.powi(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_converges_within_five_thousand_steps() {
        // 0.995^5000 ≈ 1.2e-11, far below 1e-6.
        let mut m = single("w", 0.0);
        let w = single("w", 1.0);
        for _ in 0..5000 {
            ema_update(&mut m, &w, 0.995).unwrap();
        }
        assert!((m.get("w").unwrap().data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ema_rejects_shape_mismatch_and_bad_decay() {
        let mut m = single("w", 0.0);
        let mut other = ParamSet::new();
        other.insert("w", Tensor::zeros(Dims::new(1, 1, 1, 3))).unwrap();
        assert!(ema_update(&mut m, &other, 0.9).is_err());
        assert!(ema_update(&mut m, &single("w", 1.0), 1.0).is_err());
    }
}
