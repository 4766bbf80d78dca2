use std::collections::BTreeMap;

use super::{DenoiserError, UNetConfig};
use crate::tensor::{
    sinusoidal_time_embedding, Dims, Padding, ParamSet, Rng, Scalar, Tape, Tensor, Var,
};

/// Parameter names and shapes, in construction order.
pub(crate) fn param_shapes(cfg: &UNetConfig) -> Vec<(String, Dims)> {
    let mut out = Vec::new();
    let td = cfg.time_embed_dim;
    linear_shapes(&mut out, "time.fc1", td, td);
    linear_shapes(&mut out, "time.fc2", td, td);
    conv_shapes(&mut out, "conv_in", cfg.in_channels, cfg.base_channels, 3);
    let mut ch = cfg.base_channels;
    for l in 0..cfg.levels() {
        let c = cfg.level_channels(l);
        for b in 0..cfg.res_blocks_per_level {
            res_shapes(&mut out, &format!("down{l}.res{b}"), ch, c, td);
            ch = c;
        }
        if l + 1 < cfg.levels() {
            conv_shapes(&mut out, &format!("down{l}.down"), ch, ch, 3);
        }
    }
    res_shapes(&mut out, "mid.res0", ch, ch, td);
    for l in (0..cfg.levels()).rev() {
        let c = cfg.level_channels(l);
        for b in 0..cfg.res_blocks_per_level {
            let cin = if b == 0 { ch + c } else { ch };
            res_shapes(&mut out, &format!("up{l}.res{b}"), cin, c, td);
            ch = c;
        }
        if l > 0 {
            conv_shapes(&mut out, &format!("up{l}.up"), ch, ch, 3);
        }
    }
    norm_shapes(&mut out, "out.norm", ch);
    conv_shapes(&mut out, "out.conv", ch, cfg.in_channels, 3);
    out
}

fn linear_shapes(out: &mut Vec<(String, Dims)>, name: &str, cin: usize, cout: usize) {
    out.push((format!("{name}.w"), Dims::new(cout, cin, 1, 1)));
    out.push((format!("{name}.b"), Dims::new(1, cout, 1, 1)));
}

fn conv_shapes(out: &mut Vec<(String, Dims)>, name: &str, cin: usize, cout: usize, k: usize) {
    out.push((format!("{name}.w"), Dims::new(cout, cin, k, k)));
    out.push((format!("{name}.b"), Dims::new(1, cout, 1, 1)));
}

fn norm_shapes(out: &mut Vec<(String, Dims)>, name: &str, c: usize) {
    out.push((format!("{name}.g"), Dims::new(1, c, 1, 1)));
    out.push((format!("{name}.b"), Dims::new(1, c, 1, 1)));
}

fn res_shapes(out: &mut Vec<(String, Dims)>, name: &str, cin: usize, cout: usize, td: usize) {
    norm_shapes(out, &format!("{name}.norm1"), cin);
    conv_shapes(out, &format!("{name}.conv1"), cin, cout, 3);
    linear_shapes(out, &format!("{name}.temb"), td, cout);
    norm_shapes(out, &format!("{name}.norm2"), cout);
    conv_shapes(out, &format!("{name}.conv2"), cout, cout, 3);
    if cin != cout {
        conv_shapes(out, &format!("{name}.skip"), cin, cout, 1);
    }
}

/// Kaiming-normal weights, zero biases, unit norm gains, and a zero output
/// projection so a fresh model predicts ε̂ = 0.
pub(crate) fn init_params(cfg: &UNetConfig, rng: &mut Rng) -> ParamSet<f32> {
    let mut set = ParamSet::new();
    for (name, dims) in param_shapes(cfg) {
        let t = if name.ends_with(".g") {
            Tensor::full(dims, 1.0)
        } else if name.ends_with(".w") && !name.starts_with("out.conv") {
            let fan_in = dims.c * dims.h * dims.w;
            let std = (2.0 / fan_in as f64).sqrt();
            Tensor::from_fn(dims, |_| (std * rng.normal()) as f32)
        } else {
            Tensor::zeros(dims)
        };
        set.insert(name, t).expect("names are unique by construction");
    }
    set
}

/// One forward pass on `tape`. `steps` are 0-based time indices.
pub(crate) struct Forward<'t, T: Scalar> {
    pub output: Var<'t, T>,
    /// Encoder activations at the end of each level, before downsampling.
    pub levels: Vec<Var<'t, T>>,
    pub bound: Vec<(String, Var<'t, T>)>,
}

pub(crate) fn forward<'t, T: Scalar>(
    cfg: &UNetConfig,
    params: &ParamSet<T>,
    tape: &'t Tape<T>,
    x: &Tensor<T>,
    steps: &[usize],
    track: bool,
) -> Result<Forward<'t, T>, DenoiserError> {
    let d = x.dims();
    check_input(cfg, d, steps)?;
    let bound: Vec<(String, Var<'t, T>)> = params
        .iter()
        .map(|(k, v)| {
            let var = if track {
                tape.param(v.clone())
            } else {
                tape.constant(v.clone())
            };
            (k.clone(), var)
        })
        .collect();
    let lookup: BTreeMap<&str, Var<'t, T>> = bound.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let p = |name: String| -> Result<Var<'t, T>, DenoiserError> {
        lookup
            .get(name.as_str())
            .copied()
            .ok_or(DenoiserError::MissingParam(name))
    };
    let net = Net { cfg, p: &p };

    let td = cfg.time_embed_dim;
    let mut emb = Vec::with_capacity(steps.len() * td);
    for &s in steps {
        emb.extend(sinusoidal_time_embedding(s as f64, td)?.into_iter().map(T::of));
    }
    let temb = tape.constant(Tensor::from_vec(Dims::new(d.n, td, 1, 1), emb)?);
    let temb = net.linear("time.fc1", temb)?.silu();
    let temb = net.linear("time.fc2", temb)?.silu();

    let mut h = net.conv("conv_in", tape.constant(x.clone()), 1)?;
    let mut skips = Vec::with_capacity(cfg.levels());
    for l in 0..cfg.levels() {
        for b in 0..cfg.res_blocks_per_level {
            h = net.res(&format!("down{l}.res{b}"), h, temb)?;
        }
        skips.push(h);
        if l + 1 < cfg.levels() {
            h = net.conv(&format!("down{l}.down"), h, 2)?;
        }
    }
    h = net.res("mid.res0", h, temb)?;
    for l in (0..cfg.levels()).rev() {
        h = h.concat_channels(skips[l])?;
        for b in 0..cfg.res_blocks_per_level {
            h = net.res(&format!("up{l}.res{b}"), h, temb)?;
        }
        if l > 0 {
            h = net.conv(&format!("up{l}.up"), h.upsample_nearest2x(), 1)?;
        }
    }
    let h = net.norm("out.norm", h)?.silu();
    let output = net.conv("out.conv", h, 1)?;
    Ok(Forward {
        output,
        levels: skips,
        bound,
    })
}

fn check_input(cfg: &UNetConfig, d: Dims, steps: &[usize]) -> Result<(), DenoiserError> {
    if d.c != cfg.in_channels {
        return Err(DenoiserError::Input(format!(
            "expected {} channels, got {}",
            cfg.in_channels, d.c
        )));
    }
    let m = cfg.spatial_multiple();
    if !d.h.is_multiple_of(m) || !d.w.is_multiple_of(m) {
        return Err(DenoiserError::Input(format!(
            "spatial size {}x{} not divisible by {m}",
            d.w, d.h
        )));
    }
    if steps.len() != d.n {
        return Err(DenoiserError::Input(format!(
            "{} steps for a batch of {}",
            steps.len(),
            d.n
        )));
    }
    Ok(())
}

struct Net<'a, 't, T: Scalar, F: Fn(String) -> Result<Var<'t, T>, DenoiserError>> {
    cfg: &'a UNetConfig,
    p: &'a F,
}

impl<'t, T: Scalar, F: Fn(String) -> Result<Var<'t, T>, DenoiserError>> Net<'_, 't, T, F> {
    fn pair(&self, name: &str, a: &str, b: &str) -> Result<(Var<'t, T>, Var<'t, T>), DenoiserError> {
        Ok(((self.p)(format!("{name}.{a}"))?, (self.p)(format!("{name}.{b}"))?))
    }

    fn conv(&self, name: &str, x: Var<'t, T>, stride: usize) -> Result<Var<'t, T>, DenoiserError> {
        let (w, b) = self.pair(name, "w", "b")?;
        Ok(x.conv2d(w, Some(b), stride, Padding::Zero)?)
    }

    fn linear(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>, DenoiserError> {
        let (w, b) = self.pair(name, "w", "b")?;
        Ok(x.linear(w, b)?)
    }

    fn norm(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>, DenoiserError> {
        let (g, b) = self.pair(name, "g", "b")?;
        Ok(x.group_norm(self.cfg.norm_groups, g, b)?)
    }

    fn res(&self, name: &str, x: Var<'t, T>, temb: Var<'t, T>) -> Result<Var<'t, T>, DenoiserError> {
        let h = self.norm(&format!("{name}.norm1"), x)?.silu();
        let h = self.conv(&format!("{name}.conv1"), h, 1)?;
        let h = h.add_channels(self.linear(&format!("{name}.temb"), temb)?)?;
        let h = self.norm(&format!("{name}.norm2"), h)?.silu();
        let h = self.conv(&format!("{name}.conv2"), h, 1)?;
        let skip = if x.dims().c == h.dims().c {
            x
        } else {
            self.conv(&format!("{name}.skip"), x, 1)?
        };
        Ok(h.add(skip)?)
    }
}
