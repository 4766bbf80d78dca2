//! Central finite-difference oracle for the autodiff engine.
//!
//! Runs in the `f64` instantiation so that the comparison measures the
//! backward formulas, not single-precision rounding.

use lqsynth_core::tensor::{Dims, Rng, Tape, Tensor, Var};

pub const STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct Worst {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_err: f64,
    pub worst: Option<Worst>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Uniform values in `[-1, 1]`.
pub fn uniform(rng: &mut Rng, dims: Dims) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.uniform_range(-1.0, 1.0))
}

/// `|a − n| ≤ max(REL_TOL·max(|a|, |n|), ABS_FLOOR)`; returns the relative
/// error with the floor in the denominator.
pub fn element_ok(analytic: f64, numeric: f64) -> (bool, f64) {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    let rel = diff / scale.max(ABS_FLOOR / REL_TOL);
    (diff <= (REL_TOL * scale).max(ABS_FLOOR), rel)
}

/// Compares the analytic gradient of `Σ wᵢ·f(inputs)ᵢ` (random fixed `w`)
/// against central differences for every element of every input.
pub fn check<F>(inputs: &[Tensor<f64>], seed: u64, f: F) -> GradReport
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    check_subset(inputs, seed, usize::MAX, f)
}

/// Like [`check`] but probes at most `per_input` elements of each input,
/// spread evenly.
pub fn check_subset<F>(inputs: &[Tensor<f64>], seed: u64, per_input: usize, f: F) -> GradReport
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    let weights = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars);
        let d = out.dims();
        let mut rng = Rng::new(seed, 0xF00D);
        Tensor::from_fn(d, |_| rng.uniform_range(-1.0, 1.0))
    };
    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<_> = ins.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars)
            .weighted_sum(weights.clone())
            .unwrap()
            .value()
            .item()
            .unwrap()
    };

    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars).weighted_sum(weights.clone()).unwrap();
        let grads = tape.backward(loss).unwrap();
        vars.iter().map(|v| grads.wrt(*v)).collect()
    };

    let mut report = GradReport {
        checked: 0,
        failures: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let stride = n.div_ceil(per_input.min(n)).max(1);
        for e in (0..n).step_by(stride) {
            let orig = input.data()[e];
            probe[i].data_mut()[e] = orig + STEP;
            let up = eval(&probe);
            probe[i].data_mut()[e] = orig - STEP;
            let down = eval(&probe);
            probe[i].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[i].data()[e];
            let (ok, rel) = element_ok(a, numeric);
            report.checked += 1;
            if !ok {
                report.failures += 1;
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some(Worst {
                    input: i,
                    element: e,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    report
}
