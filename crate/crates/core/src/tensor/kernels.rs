//! Forward and backward kernels for the heavier differentiable operations.
//!
//! These are plain functions over [`Tensor`] values; the tape in
//! [`super::tape`] wires them into the reverse-mode graph.

use super::dense::{Dims, Tensor};
use super::scalar::{gemm, Layout, Scalar};
use super::TensorError;

/// Border handling for `k×k` convolutions (pad width is always `k / 2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Padding {
    /// Mirror without repeating the edge sample (`-1 → 1`).
    #[default]
    Reflect,
    Zero,
}

/// Reflects an out-of-range coordinate back into `0..len` (edge not repeated).
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    let len = len as isize;
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let mut m = i.rem_euclid(period);
    if m >= len {
        m = period - m;
    }
    m as usize
}

/// For every (output position, kernel tap) pair, the source index along one
/// axis, or `-1` when the tap lands in zero padding.
fn axis_map(
    len: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, Vec<isize>), TensorError> {
    let pad = k / 2;
    if padding == Padding::Reflect && pad >= len && len > 1 {
        return Err(TensorError::Invalid(format!(
            "reflect padding of {pad} needs an axis longer than {len}"
        )));
    }
    if len + 2 * pad < k {
        return Err(TensorError::Invalid(format!(
            "kernel {k} larger than padded axis {len}"
        )));
    }
    let out = (len + 2 * pad - k) / stride + 1;
    let mut map = Vec::with_capacity(out * k);
    for o in 0..out {
        for r in 0..k {
            let i = (o * stride + r) as isize - pad as isize;
            let src = if (0..len as isize).contains(&i) {
                i
            } else {
                match padding {
                    Padding::Reflect => reflect_index(i, len) as isize,
                    Padding::Zero => -1,
                }
            };
            map.push(src);
        }
    }
    Ok((out, map))
}

struct ConvGeometry {
    cin: usize,
    k: usize,
    oh: usize,
    ow: usize,
    rows: Vec<isize>,
    cols: Vec<isize>,
}

impl ConvGeometry {
    fn new(input: Dims, k: usize, stride: usize, padding: Padding) -> Result<Self, TensorError> {
        let (oh, rows) = axis_map(input.h, k, stride, padding)?;
        let (ow, cols) = axis_map(input.w, k, stride, padding)?;
        Ok(ConvGeometry {
            cin: input.c,
            k,
            oh,
            ow,
            rows,
            cols,
        })
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one `(C, H, W)` sample into a `(C·k·k) × (OH·OW)` matrix.
    fn im2col<T: Scalar>(&self, x: &[T], h: usize, w: usize, out: &mut [T]) {
        let k = self.k;
        let plane = self.out_plane();
        for ci in 0..self.cin {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut out[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = self.rows[oy * k + ky];
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 {
                            line.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = self.cols[ox * k + kx];
                            *v = if ix < 0 { T::zero() } else { srow[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters column gradients back.
    fn col2im<T: Scalar>(&self, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let k = self.k;
        let plane = self.out_plane();
        for ci in 0..self.cin {
            let dst = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = self.rows[oy * k + ky];
                        if iy < 0 {
                            continue;
                        }
                        let line = &src[oy * self.ow..(oy + 1) * self.ow];
                        let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &g) in line.iter().enumerate() {
                            let ix = self.cols[ox * k + kx];
                            if ix >= 0 {
                                drow[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }

    fn is_pointwise(&self, stride: usize) -> bool {
        self.k == 1 && stride == 1
    }
}

fn check_conv(x: Dims, w: Dims, bias: Option<Dims>) -> Result<(), TensorError> {
    if w.h != w.w || w.h.is_multiple_of(2) {
        return Err(TensorError::Invalid(format!(
            "conv2d kernel must be square and odd, got {w:?}"
        )));
    }
    if w.c != x.c {
        return Err(TensorError::Shape {
            op: "conv2d",
            expected: Dims::new(x.n, w.c, x.h, x.w),
            got: x,
        });
    }
    if let Some(b) = bias {
        if b.numel() != w.n {
            return Err(TensorError::Shape {
                op: "conv2d bias",
                expected: Dims::new(1, w.n, 1, 1),
                got: b,
            });
        }
    }
    Ok(())
}

pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>, TensorError> {
    let (xd, wd) = (x.dims(), weight.dims());
    check_conv(xd, wd, bias.map(|b| b.dims()))?;
    if stride == 0 {
        return Err(TensorError::Invalid("conv2d stride must be positive".into()));
    }
    let geo = ConvGeometry::new(xd, wd.h, stride, padding)?;
    let cout = wd.n;
    let od = Dims::new(xd.n, cout, geo.oh, geo.ow);
    let mut out = Tensor::zeros(od);
    let plane = geo.out_plane();
    let mut cols = if geo.is_pointwise(stride) {
        Vec::new()
    } else {
        vec![T::zero(); geo.patch_len() * plane]
    };
    for n in 0..xd.n {
        let xs = x.sample(n);
        let patches: &[T] = if geo.is_pointwise(stride) {
            xs
        } else {
            geo.im2col(xs, xd.h, xd.w, &mut cols);
            &cols
        };
        let os = &mut out.data_mut()[n * od.sample()..(n + 1) * od.sample()];
        gemm(
            cout,
            geo.patch_len(),
            plane,
            weight.data(),
            Layout::Normal,
            patches,
            Layout::Normal,
            os,
            false,
        );
        if let Some(b) = bias {
            for (co, &bv) in b.data().iter().enumerate() {
                os[co * plane..(co + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v += bv);
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, TensorError> {
    let (xd, wd) = (x.dims(), weight.dims());
    let geo = ConvGeometry::new(xd, wd.h, stride, padding)?;
    let cout = wd.n;
    let plane = geo.out_plane();
    let od = grad_out.dims();
    let mut dx = Tensor::zeros(xd);
    let mut dw = Tensor::zeros(wd);
    let mut db = vec![T::zero(); cout];
    let pointwise = geo.is_pointwise(stride);
    let mut cols = vec![T::zero(); if pointwise { 0 } else { geo.patch_len() * plane }];
    let mut dcols = vec![T::zero(); geo.patch_len() * plane];
    for n in 0..xd.n {
        let gy = grad_out.sample(n);
        for (co, b) in db.iter_mut().enumerate() {
            *b += gy[co * plane..(co + 1) * plane].iter().copied().sum::<T>();
        }
        let xs = x.sample(n);
        let patches: &[T] = if pointwise {
            xs
        } else {
            geo.im2col(xs, xd.h, xd.w, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        gemm(
            cout,
            plane,
            geo.patch_len(),
            gy,
            Layout::Normal,
            patches,
            Layout::Transposed,
            dw.data_mut(),
            true,
        );
        // dcols = Wᵀ · dY
        gemm(
            geo.patch_len(),
            cout,
            plane,
            weight.data(),
            Layout::Transposed,
            gy,
            Layout::Normal,
            &mut dcols,
            false,
        );
        let dxs = &mut dx.data_mut()[n * xd.sample()..(n + 1) * xd.sample()];
        if pointwise {
            dxs.iter_mut().zip(&dcols).for_each(|(d, &g)| *d += g);
        } else {
            geo.col2im(&dcols, xd.h, xd.w, dxs);
        }
    }
    debug_assert_eq!(od.c, cout);
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: Tensor::from_vec(Dims::new(1, cout, 1, 1), db)?,
    })
}

/// Per-(sample, group) statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GroupStats {
    pub mean: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

pub fn group_norm<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, GroupStats), TensorError> {
    let d = x.dims();
    if groups == 0 || !d.c.is_multiple_of(groups) {
        return Err(TensorError::Invalid(format!(
            "group_norm: {groups} groups do not divide {} channels",
            d.c
        )));
    }
    for p in [gamma, beta] {
        if p.numel() != d.c {
            return Err(TensorError::Shape {
                op: "group_norm affine",
                expected: Dims::new(1, d.c, 1, 1),
                got: p.dims(),
            });
        }
    }
    let cpg = d.c / groups;
    let glen = cpg * d.plane();
    let mut out = Tensor::zeros(d);
    let mut stats = GroupStats {
        mean: Vec::with_capacity(d.n * groups),
        rstd: Vec::with_capacity(d.n * groups),
    };
    for n in 0..d.n {
        for g in 0..groups {
            let start = n * d.sample() + g * glen;
            let chunk = &x.data()[start..start + glen];
            let mean = chunk.iter().map(|v| v.as_f64()).sum::<f64>() / glen as f64;
            let var = chunk
                .iter()
                .map(|v| {
                    let e = v.as_f64() - mean;
                    e * e
                })
                .sum::<f64>()
                / glen as f64;
            let rstd = 1.0 / (var + GROUP_NORM_EPS).sqrt();
            stats.mean.push(mean);
            stats.rstd.push(rstd);
            let dst = &mut out.data_mut()[start..start + glen];
            for (j, (o, v)) in dst.iter_mut().zip(chunk).enumerate() {
                let c = g * cpg + j / d.plane();
                let xhat = (v.as_f64() - mean) * rstd;
                *o = T::of(xhat * gamma.data()[c].as_f64() + beta.data()[c].as_f64());
            }
        }
    }
    Ok((out, stats))
}

pub struct GroupNormGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn group_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    stats: &GroupStats,
    grad_out: &Tensor<T>,
) -> GroupNormGrads<T> {
    let d = x.dims();
    let cpg = d.c / groups;
    let plane = d.plane();
    let glen = cpg * plane;
    let mut dx = Tensor::zeros(d);
    let mut dgamma = vec![0.0f64; d.c];
    let mut dbeta = vec![0.0f64; d.c];
    for n in 0..d.n {
        for g in 0..groups {
            let si = n * groups + g;
            let (mean, rstd) = (stats.mean[si], stats.rstd[si]);
            let start = n * d.sample() + g * glen;
            let xs = &x.data()[start..start + glen];
            let gs = &grad_out.data()[start..start + glen];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..glen {
                let c = g * cpg + j / plane;
                let xhat = (xs[j].as_f64() - mean) * rstd;
                let gy = gs[j].as_f64();
                dgamma[c] += gy * xhat;
                dbeta[c] += gy;
                let dxhat = gy * gamma.data()[c].as_f64();
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
            }
            let m = glen as f64;
            let dst = &mut dx.data_mut()[start..start + glen];
            for j in 0..glen {
                let c = g * cpg + j / plane;
                let xhat = (xs[j].as_f64() - mean) * rstd;
                let dxhat = gs[j].as_f64() * gamma.data()[c].as_f64();
                dst[j] = T::of(rstd / m * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat));
            }
        }
    }
    let to_t = |v: Vec<f64>| {
        Tensor::from_vec(
            Dims::new(1, d.c, 1, 1),
            v.into_iter().map(T::of).collect(),
        )
        .expect("channel vector")
    };
    GroupNormGrads {
        input: dx,
        gamma: to_t(dgamma),
        beta: to_t(dbeta),
    }
}

/// `y = x·Wᵀ + b` with `x: (N, F, 1, 1)`, `W: (O, F, 1, 1)`, `b: (1, O, 1, 1)`.
pub fn linear<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let (xd, wd) = (x.dims(), weight.dims());
    if xd.h != 1 || xd.w != 1 || wd.h != 1 || wd.w != 1 || wd.c != xd.c {
        return Err(TensorError::Shape {
            op: "linear",
            expected: Dims::new(xd.n, wd.c, 1, 1),
            got: xd,
        });
    }
    if bias.numel() != wd.n {
        return Err(TensorError::Shape {
            op: "linear bias",
            expected: Dims::new(1, wd.n, 1, 1),
            got: bias.dims(),
        });
    }
    let (n, f, o) = (xd.n, xd.c, wd.n);
    let mut out = Tensor::zeros(Dims::new(n, o, 1, 1));
    gemm(
        n,
        f,
        o,
        x.data(),
        Layout::Normal,
        weight.data(),
        Layout::Transposed,
        out.data_mut(),
        false,
    );
    for row in out.data_mut().chunks_mut(o) {
        row.iter_mut().zip(bias.data()).for_each(|(v, &b)| *v += b);
    }
    Ok(out)
}

pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (xd, wd) = (x.dims(), weight.dims());
    let (n, f, o) = (xd.n, xd.c, wd.n);
    let mut dx = Tensor::zeros(xd);
    let mut dw = Tensor::zeros(wd);
    gemm(
        n,
        o,
        f,
        grad_out.data(),
        Layout::Normal,
        weight.data(),
        Layout::Normal,
        dx.data_mut(),
        false,
    );
    gemm(
        o,
        n,
        f,
        grad_out.data(),
        Layout::Transposed,
        x.data(),
        Layout::Normal,
        dw.data_mut(),
        false,
    );
    let mut db = vec![T::zero(); o];
    for row in grad_out.data().chunks(o) {
        db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
    }
    (
        dx,
        dw,
        Tensor::from_vec(Dims::new(1, o, 1, 1), db).expect("bias grad"),
    )
}
