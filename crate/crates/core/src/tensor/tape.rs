//! Define-by-run reverse-mode autodiff.
//!
//! A [`Tape`] is an append-only node list; every operation on a [`Var`]
//! evaluates eagerly and records how to push gradients back to its inputs.
//! Appending keeps the list topologically ordered, so the backward pass is a
//! single reverse sweep.

use std::cell::RefCell;
use std::rc::Rc;

use super::dense::{Dims, Tensor};
use super::kernels::{self, GroupStats, Padding};
use super::scalar::Scalar;
use super::TensorError;

enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        stride: usize,
        padding: Padding,
    },
    GroupNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        groups: usize,
        stats: GroupStats,
    },
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    Silu {
        x: usize,
    },
    UpsampleNearest2x {
        x: usize,
    },
    AvgPool2x {
        x: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    ScaleAdd {
        s1: T,
        a: usize,
        s2: T,
        b: usize,
    },
    AddChannels {
        a: usize,
        b: usize,
    },
    L1Loss {
        pred: usize,
        target: usize,
    },
    WeightedSum {
        x: usize,
        weights: Tensor<T>,
    },
}

struct Node<T: Scalar> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    tracked: bool,
}

/// Recording of one forward evaluation.
pub struct Tape<T: Scalar = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar = f32> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf node; gradients are collected for it iff `value.requires_grad()`.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        let tracked = value.requires_grad();
        self.push(value, Op::Leaf, tracked)
    }

    /// Leaf node that always collects gradients.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value.with_grad())
    }

    /// Leaf node that never collects gradients.
    pub fn constant(&self, mut value: Tensor<T>) -> Var<'_, T> {
        value.set_requires_grad(false);
        self.leaf(value)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var<'_, T> {
        value.assert_finite("tape op");
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>, TensorError> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NotScalar(root.value.dims()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(root.value.dims(), T::one()));

        let accumulate = |grads: &mut Vec<Option<Tensor<T>>>, id: usize, g: Tensor<T>| {
            if !nodes[id].tracked {
                return;
            }
            match &mut grads[id] {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        };

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked {
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(gy) = grads[id].take() else {
                continue;
            };
            let val = |i: usize| &*nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let g = kernels::conv2d_backward(val(*x), val(*w), *stride, *padding, &gy)?;
                    accumulate(&mut grads, *x, g.input);
                    accumulate(&mut grads, *w, g.weight);
                    if let Some(b) = b {
                        let bd = val(*b).dims();
                        accumulate(&mut grads, *b, g.bias.reshape(bd)?);
                    }
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    stats,
                } => {
                    let g = kernels::group_norm_backward(val(*x), *groups, val(*gamma), stats, &gy);
                    accumulate(&mut grads, *x, g.input);
                    accumulate(&mut grads, *gamma, g.gamma.reshape(val(*gamma).dims())?);
                    accumulate(&mut grads, *beta, g.beta.reshape(val(*beta).dims())?);
                }
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = kernels::linear_backward(val(*x), val(*w), &gy);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db.reshape(val(*b).dims())?);
                }
                Op::Silu { x } => {
                    let dx = val(*x).zip_map(&gy, |v, g| {
                        let s = sigmoid(v);
                        g * s * (T::one() + v * (T::one() - s))
                    })?;
                    accumulate(&mut grads, *x, dx);
                }
                Op::UpsampleNearest2x { x } => {
                    let xd = val(*x).dims();
                    let mut dx = Tensor::zeros(xd);
                    let (ow, plane_out) = (xd.w * 2, xd.plane() * 4);
                    for (p, dplane) in dx.data_mut().chunks_mut(xd.plane()).enumerate() {
                        let src = &gy.data()[p * plane_out..(p + 1) * plane_out];
                        for y in 0..xd.h {
                            for xx in 0..xd.w {
                                let o = 2 * y * ow + 2 * xx;
                                dplane[y * xd.w + xx] =
                                    src[o] + src[o + 1] + src[o + ow] + src[o + ow + 1];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::AvgPool2x { x } => {
                    let xd = val(*x).dims();
                    let (oh, ow) = (xd.h / 2, xd.w / 2);
                    let quarter = T::of(0.25);
                    let mut dx = Tensor::zeros(xd);
                    for (p, dplane) in dx.data_mut().chunks_mut(xd.plane()).enumerate() {
                        let src = &gy.data()[p * oh * ow..(p + 1) * oh * ow];
                        for y in 0..oh {
                            for xx in 0..ow {
                                let g = src[y * ow + xx] * quarter;
                                let i = 2 * y * xd.w + 2 * xx;
                                dplane[i] = g;
                                dplane[i + 1] = g;
                                dplane[i + xd.w] = g;
                                dplane[i + xd.w + 1] = g;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat { a, b } => {
                    let (ad, bd) = (val(*a).dims(), val(*b).dims());
                    let mut da = Vec::with_capacity(ad.numel());
                    let mut db = Vec::with_capacity(bd.numel());
                    for n in 0..ad.n {
                        let s = gy.sample(n);
                        da.extend_from_slice(&s[..ad.sample()]);
                        db.extend_from_slice(&s[ad.sample()..]);
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(ad, da)?);
                    accumulate(&mut grads, *b, Tensor::from_vec(bd, db)?);
                }
                Op::ScaleAdd { s1, a, s2, b } => {
                    accumulate(&mut grads, *a, gy.map(|g| g * *s1));
                    accumulate(&mut grads, *b, gy.map(|g| g * *s2));
                }
                Op::AddChannels { a, b } => {
                    let bd = val(*b).dims();
                    let ad = gy.dims();
                    let mut db = vec![T::zero(); bd.numel()];
                    for n in 0..ad.n {
                        let bn = if bd.n == 1 { 0 } else { n };
                        for c in 0..ad.c {
                            let s = &gy.data()[(n * ad.c + c) * ad.plane()..][..ad.plane()];
                            db[bn * bd.c + c] += s.iter().copied().sum::<T>();
                        }
                    }
                    accumulate(&mut grads, *b, Tensor::from_vec(bd, db)?);
                    accumulate(&mut grads, *a, gy);
                }
                Op::L1Loss { pred, target } => {
                    let scale = gy.item()? / T::of(val(*pred).numel() as f64);
                    let sign = val(*pred).zip_map(val(*target), |p, t| {
                        if p > t {
                            scale
                        } else if p < t {
                            -scale
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(&mut grads, *target, sign.map(|s| -s));
                    accumulate(&mut grads, *pred, sign);
                }
                Op::WeightedSum { x, weights } => {
                    let g = gy.item()?;
                    accumulate(&mut grads, *x, weights.map(|w| w * g));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn same_dims(op: &'static str, a: Dims, b: Dims) -> Result<(), TensorError> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::Shape {
            op,
            expected: a,
            got: b,
        })
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn dims(&self) -> Dims {
        self.tape.nodes.borrow()[self.id].value.dims()
    }

    fn tracked(&self) -> bool {
        self.tape.tracked(self.id)
    }

    fn emit(&self, value: Tensor<T>, op: Op<T>, inputs: &[Var<'t, T>]) -> Var<'t, T> {
        let tracked = inputs.iter().any(|v| v.tracked());
        self.tape.push(value, op, tracked)
    }

    pub fn conv2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var<'t, T>, TensorError> {
        let bias_val = bias.map(|b| b.value());
        let out = kernels::conv2d(
            &self.value(),
            &weight.value(),
            bias_val.as_deref(),
            stride,
            padding,
        )?;
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(self.emit(
            out,
            Op::Conv2d {
                x: self.id,
                w: weight.id,
                b: bias.map(|b| b.id),
                stride,
                padding,
            },
            &inputs,
        ))
    }

    pub fn group_norm(
        self,
        groups: usize,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
    ) -> Result<Var<'t, T>, TensorError> {
        let (out, stats) =
            kernels::group_norm(&self.value(), groups, &gamma.value(), &beta.value())?;
        Ok(self.emit(
            out,
            Op::GroupNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                groups,
                stats,
            },
            &[self, gamma, beta],
        ))
    }

    pub fn linear(self, weight: Var<'t, T>, bias: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let out = kernels::linear(&self.value(), &weight.value(), &bias.value())?;
        Ok(self.emit(
            out,
            Op::Linear {
                x: self.id,
                w: weight.id,
                b: bias.id,
            },
            &[self, weight, bias],
        ))
    }

    pub fn silu(self) -> Var<'t, T> {
        let out = self.value().map(|v| v * sigmoid(v));
        self.emit(out, Op::Silu { x: self.id }, &[self])
    }

    pub fn upsample_nearest2x(self) -> Var<'t, T> {
        let x = self.value();
        let d = x.dims();
        let od = Dims::new(d.n, d.c, d.h * 2, d.w * 2);
        let mut out = Tensor::zeros(od);
        for (p, oplane) in out.data_mut().chunks_mut(od.plane()).enumerate() {
            let src = &x.data()[p * d.plane()..(p + 1) * d.plane()];
            for y in 0..od.h {
                for xx in 0..od.w {
                    oplane[y * od.w + xx] = src[(y / 2) * d.w + xx / 2];
                }
            }
        }
        self.emit(out, Op::UpsampleNearest2x { x: self.id }, &[self])
    }

    pub fn avg_pool2x(self) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        let d = x.dims();
        if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
            return Err(TensorError::Invalid(format!(
                "avg_pool2x needs even spatial dims, got {d:?}"
            )));
        }
        let od = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
        let quarter = T::of(0.25);
        let mut out = Tensor::zeros(od);
        for (p, oplane) in out.data_mut().chunks_mut(od.plane()).enumerate() {
            let src = &x.data()[p * d.plane()..(p + 1) * d.plane()];
            for y in 0..od.h {
                for xx in 0..od.w {
                    let i = 2 * y * d.w + 2 * xx;
                    oplane[y * od.w + xx] =
                        (src[i] + src[i + 1] + src[i + d.w] + src[i + d.w + 1]) * quarter;
                }
            }
        }
        Ok(self.emit(out, Op::AvgPool2x { x: self.id }, &[self]))
    }

    pub fn concat_channels(self, other: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (a, b) = (self.value(), other.value());
        let (ad, bd) = (a.dims(), b.dims());
        if ad.n != bd.n || ad.h != bd.h || ad.w != bd.w {
            return Err(TensorError::Shape {
                op: "concat_channels",
                expected: Dims::new(ad.n, bd.c, ad.h, ad.w),
                got: bd,
            });
        }
        let od = Dims::new(ad.n, ad.c + bd.c, ad.h, ad.w);
        let mut data = Vec::with_capacity(od.numel());
        for n in 0..ad.n {
            data.extend_from_slice(a.sample(n));
            data.extend_from_slice(b.sample(n));
        }
        Ok(self.emit(
            Tensor::from_vec(od, data)?,
            Op::Concat {
                a: self.id,
                b: other.id,
            },
            &[self, other],
        ))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        scale_add(T::one(), self, T::one(), other)
    }

    /// Adds a per-channel vector `(N|1, C, 1, 1)` to every spatial position.
    pub fn add_channels(self, bias: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (a, b) = (self.value(), bias.value());
        let (ad, bd) = (a.dims(), b.dims());
        if bd.c != ad.c || bd.h != 1 || bd.w != 1 || (bd.n != 1 && bd.n != ad.n) {
            return Err(TensorError::Shape {
                op: "add_channels",
                expected: Dims::new(ad.n, ad.c, 1, 1),
                got: bd,
            });
        }
        let mut out = (*a).clone();
        out.set_requires_grad(false);
        let plane = ad.plane();
        for n in 0..ad.n {
            let bn = if bd.n == 1 { 0 } else { n };
            for c in 0..ad.c {
                let bv = b.data()[bn * bd.c + c];
                out.data_mut()[(n * ad.c + c) * plane..][..plane]
                    .iter_mut()
                    .for_each(|v| *v += bv);
            }
        }
        Ok(self.emit(
            out,
            Op::AddChannels {
                a: self.id,
                b: bias.id,
            },
            &[self, bias],
        ))
    }

    /// Sum of all elements.
    pub fn sum(self) -> Var<'t, T> {
        let d = self.dims();
        self.weighted_sum(Tensor::full(d, T::one()))
            .expect("weights shaped like input")
    }

    /// `Σ xᵢ·wᵢ` for constant weights.
    pub fn weighted_sum(self, weights: Tensor<T>) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        same_dims("weighted_sum", x.dims(), weights.dims())?;
        let s: f64 = x
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum();
        Ok(self.emit(
            Tensor::scalar(T::of(s)),
            Op::WeightedSum { x: self.id, weights },
            &[self],
        ))
    }
}

/// `s1·a + s2·b` for scalar constants.
pub fn scale_add<'t, T: Scalar>(
    s1: T,
    a: Var<'t, T>,
    s2: T,
    b: Var<'t, T>,
) -> Result<Var<'t, T>, TensorError> {
    let out = a.value().zip_map(&b.value(), |x, y| s1 * x + s2 * y)?;
    Ok(a.emit(
        out,
        Op::ScaleAdd {
            s1,
            a: a.id,
            s2,
            b: b.id,
        },
        &[a, b],
    ))
}

/// Mean absolute error; the subgradient at ties is 0.
pub fn l1_loss<'t, T: Scalar>(pred: Var<'t, T>, target: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
    let (p, t) = (pred.value(), target.value());
    same_dims("l1_loss", p.dims(), t.dims())?;
    let total: f64 = p
        .data()
        .iter()
        .zip(t.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
        .sum();
    let loss = total / p.numel() as f64;
    Ok(pred.emit(
        Tensor::scalar(T::of(loss)),
        Op::L1Loss {
            pred: pred.id,
            target: target.id,
        },
        &[pred, target],
    ))
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, zeros when the loss does not reach it.
    pub fn wrt(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.dims()))
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Tensor<T> {
        self.grads
            .get_mut(var.id)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Tensor::zeros(var.dims()))
    }
}
