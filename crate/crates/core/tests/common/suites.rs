//! Check suites shared by the unit tests and the acceptance run.

use lqsynth_core::denoiser::{unet_weighted_sum_grads, DenoiserModel, UNetConfig};
use lqsynth_core::tensor::{l1_loss, scale_add, Dims, Padding, ParamSet, Rng, Scalar, Tensor};

use super::gradcheck::{self, element_ok, uniform, GradReport, Worst, STEP};

/// Finite-difference reports for every differentiable op.
pub fn op_gradient_reports() -> Vec<(&'static str, GradReport)> {
    let mut out = Vec::new();
    let mut rng = Rng::new(1, 0);

    let x = uniform(&mut rng, Dims::new(2, 3, 5, 6));
    let w = uniform(&mut rng, Dims::new(4, 3, 3, 3));
    let b = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    out.push((
        "conv2d reflect",
        gradcheck::check(&[x, w, b], 11, |_, v| {
            v[0].conv2d(v[1], Some(v[2]), 1, Padding::Reflect).unwrap()
        }),
    ));

    let x = uniform(&mut rng, Dims::new(2, 2, 6, 6));
    let w = uniform(&mut rng, Dims::new(3, 2, 3, 3));
    out.push((
        "conv2d zero stride 2",
        gradcheck::check(&[x.clone(), w], 12, |_, v| {
            v[0].conv2d(v[1], None, 2, Padding::Zero).unwrap()
        }),
    ));
    let w1 = uniform(&mut rng, Dims::new(5, 2, 1, 1));
    let b1 = uniform(&mut rng, Dims::new(1, 5, 1, 1));
    out.push((
        "conv2d 1x1",
        gradcheck::check(&[x, w1, b1], 13, |_, v| {
            v[0].conv2d(v[1], Some(v[2]), 1, Padding::Reflect).unwrap()
        }),
    ));

    let x = uniform(&mut rng, Dims::new(2, 4, 3, 3));
    let g = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    let b = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    out.push((
        "group_norm",
        gradcheck::check(&[x, g, b], 14, |_, v| v[0].group_norm(2, v[1], v[2]).unwrap()),
    ));

    let x = uniform(&mut rng, Dims::new(2, 3, 4, 4));
    out.push(("silu", gradcheck::check(std::slice::from_ref(&x), 15, |_, v| v[0].silu())));
    out.push((
        "upsample_nearest2x",
        gradcheck::check(std::slice::from_ref(&x), 16, |_, v| v[0].upsample_nearest2x()),
    ));
    out.push((
        "avg_pool2x",
        gradcheck::check(std::slice::from_ref(&x), 17, |_, v| v[0].avg_pool2x().unwrap()),
    ));
    let y = uniform(&mut rng, Dims::new(2, 2, 4, 4));
    out.push((
        "concat_channels",
        gradcheck::check(&[x.clone(), y], 18, |_, v| v[0].concat_channels(v[1]).unwrap()),
    ));
    let z = uniform(&mut rng, Dims::new(2, 3, 4, 4));
    out.push((
        "add",
        gradcheck::check(&[x.clone(), z.clone()], 19, |_, v| v[0].add(v[1]).unwrap()),
    ));
    out.push((
        "scale_add",
        gradcheck::check(&[x.clone(), z], 20, |_, v| scale_add(0.7, v[0], -1.3, v[1]).unwrap()),
    ));
    let per_sample = uniform(&mut rng, Dims::new(2, 3, 1, 1));
    out.push((
        "add_channels",
        gradcheck::check(&[x.clone(), per_sample], 21, |_, v| v[0].add_channels(v[1]).unwrap()),
    ));
    let shared = uniform(&mut rng, Dims::new(1, 3, 1, 1));
    out.push((
        "add_channels broadcast",
        gradcheck::check(&[x, shared], 22, |_, v| v[0].add_channels(v[1]).unwrap()),
    ));

    let x = uniform(&mut rng, Dims::new(3, 6, 1, 1));
    let w = uniform(&mut rng, Dims::new(4, 6, 1, 1));
    let b = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    out.push((
        "linear",
        gradcheck::check(&[x, w, b], 23, |_, v| v[0].linear(v[1], v[2]).unwrap()),
    ));

    let p = uniform(&mut rng, Dims::new(2, 3, 4, 4));
    // Keep every |p − t| ≥ 0.05 so ±h never crosses the kink.
    let t = p.map(|v| {
        if v > 0.0 {
            v - 0.05 - 0.5 * v.abs()
        } else {
            v + 0.05 + 0.5 * v.abs()
        }
    });
    out.push(("l1_loss", gradcheck::check(&[p, t], 24, |_, v| l1_loss(v[0], v[1]).unwrap())));

    let x = uniform(&mut rng, Dims::new(2, 3, 6, 6));
    let w1 = uniform(&mut rng, Dims::new(4, 3, 3, 3));
    let b1 = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    let g = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    let be = uniform(&mut rng, Dims::new(1, 4, 1, 1));
    let w2 = uniform(&mut rng, Dims::new(3, 4, 3, 3));
    let target = uniform(&mut rng, Dims::new(2, 3, 6, 6));
    out.push((
        "two-layer net",
        gradcheck::check(&[x, w1, b1, g, be, w2], 25, |tape, v| {
            let h = v[0]
                .conv2d(v[1], Some(v[2]), 1, Padding::Reflect)
                .unwrap()
                .group_norm(2, v[3], v[4])
                .unwrap()
                .silu();
            let y = h.conv2d(v[5], None, 1, Padding::Zero).unwrap();
            let t = tape.constant(target.clone());
            // Squash through a smooth map so the composite stays differentiable.
            scale_add(1.0, y, -1.0, t).unwrap().silu()
        }),
    ));
    out
}

/// Replaces every parameter by itself plus uniform noise so no path is
/// blocked by zero initialization.
pub fn scrambled<T: Scalar>(params: &ParamSet<T>, seed: u64, scale: f64) -> ParamSet<T> {
    let mut rng = Rng::new(seed, 0);
    let mut out = ParamSet::new();
    for (name, t) in params.iter() {
        let v = Tensor::from_fn(t.dims(), |i| {
            T::of(t.data()[i].as_f64() + scale * rng.uniform_range(-1.0, 1.0))
        });
        out.insert(name.clone(), v).unwrap();
    }
    out
}

/// Finite differences through a whole miniature UNet, probing up to 12
/// elements of every parameter tensor.
pub fn unet_gradient_report() -> GradReport {
    let cfg = UNetConfig {
        in_channels: 4,
        base_channels: 4,
        channel_mults: vec![1, 2],
        res_blocks_per_level: 1,
        time_embed_dim: 8,
        norm_groups: 2,
    };
    let m = DenoiserModel::init(cfg.clone(), &mut Rng::new(11, 0)).unwrap();
    let params: ParamSet<f64> = scrambled(&m.params().cast(), 11, 0.3);
    let mut rng = Rng::new(12, 0);
    let x = Tensor::from_fn(Dims::new(2, 4, 8, 8), |_| rng.uniform_range(-1.0, 1.0));
    let steps = [3usize, 250];
    let w = Tensor::from_fn(x.dims(), |_| rng.uniform_range(-1.0, 1.0));
    let (_, grads) = unet_weighted_sum_grads(&cfg, &params, &x, &steps, &w).unwrap();

    let eval = |p: &ParamSet<f64>| unet_weighted_sum_grads(&cfg, p, &x, &steps, &w).unwrap().0;
    let mut probe = params.clone();
    let mut report = GradReport {
        checked: 0,
        failures: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (k, (name, t)) in params.iter().enumerate() {
        let n = t.numel();
        let stride = n.div_ceil(12.min(n));
        for e in (0..n).step_by(stride) {
            let orig = t.data()[e];
            probe.get_mut(name).unwrap().data_mut()[e] = orig + STEP;
            let up = eval(&probe);
            probe.get_mut(name).unwrap().data_mut()[e] = orig - STEP;
            let down = eval(&probe);
            probe.get_mut(name).unwrap().data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads.get(name).unwrap().data()[e];
            let (ok, rel) = element_ok(analytic, numeric);
            report.checked += 1;
            if !ok {
                report.failures += 1;
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some(Worst {
                    input: k,
                    element: e,
                    analytic,
                    numeric,
                });
            }
        }
    }
    report
}
