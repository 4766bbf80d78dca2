use std::fmt;

use super::scalar::Scalar;
use super::TensorError;

/// Shape of a rank-4 tensor in (batch, channel, height, width) order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Dims::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn sample(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array, row-major over (N, C, H, W).
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    dims: Dims,
    data: Vec<T>,
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self, TensorError> {
        if dims.n == 0 || dims.c == 0 || dims.h == 0 || dims.w == 0 {
            return Err(TensorError::EmptyDims(dims));
        }
        if data.len() != dims.numel() {
            return Err(TensorError::DataLength {
                dims,
                len: data.len(),
            });
        }
        Ok(Tensor {
            dims,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(dims: Dims) -> Self {
        Tensor::full(dims, T::zero())
    }

    pub fn full(dims: Dims, value: T) -> Self {
        assert!(dims.numel() > 0, "tensor dims must be positive: {dims:?}");
        Tensor {
            dims,
            data: vec![value; dims.numel()],
            requires_grad: false,
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor::full(Dims::scalar(), value)
    }

    /// Single-sample channel vector shaped `(1, len, 1, 1)`.
    pub fn vector(values: Vec<T>) -> Result<Self, TensorError> {
        Tensor::from_vec(Dims::new(1, values.len(), 1, 1), values)
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize) -> T) -> Self {
        let data = (0..dims.numel()).map(&mut f).collect();
        Tensor {
            dims,
            data,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + y) * self.dims.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<T, TensorError> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar(self.dims))
        }
    }

    pub fn reshape(self, dims: Dims) -> Result<Self, TensorError> {
        if dims.numel() != self.data.len() {
            return Err(TensorError::DataLength {
                dims,
                len: self.data.len(),
            });
        }
        Ok(Tensor { dims, ..self })
    }

    /// Slice of the `i`-th sample along the batch axis.
    pub fn sample(&self, i: usize) -> &[T] {
        let s = self.dims.sample();
        &self.data[i * s..(i + 1) * s]
    }

    /// New tensor holding samples `range` of the batch.
    pub fn batch_slice(&self, start: usize, len: usize) -> Result<Self, TensorError> {
        if len == 0 || start + len > self.dims.n {
            return Err(TensorError::Invalid(format!(
                "batch slice {start}..{} out of range for {}",
                start + len,
                self.dims
            )));
        }
        let s = self.dims.sample();
        Tensor::from_vec(
            Dims { n: len, ..self.dims },
            self.data[start * s..(start + len) * s].to_vec(),
        )
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Self, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("stack of zero tensors".into()))?;
        let d = first.dims;
        let mut data = Vec::with_capacity(d.numel() * parts.len());
        let mut n = 0;
        for p in parts {
            if p.dims.c != d.c || p.dims.h != d.h || p.dims.w != d.w {
                return Err(TensorError::Shape {
                    op: "stack",
                    expected: d,
                    got: p.dims,
                });
            }
            n += p.dims.n;
            data.extend_from_slice(&p.data);
        }
        Tensor::from_vec(Dims { n, ..d }, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Self, TensorError> {
        if self.dims != other.dims {
            return Err(TensorError::Shape {
                op: "zip_map",
                expected: self.dims,
                got: other.dims,
            });
        }
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            requires_grad: false,
        })
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn mean_f64(&self) -> f64 {
        self.sum_f64() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts element type (used to run f64 gradient checks against f32 weights).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
        }
    }

    pub(crate) fn assert_finite(&self, op: &str) {
        debug_assert!(self.all_finite(), "non-finite value produced by {op}");
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOW: usize = 8;
        write!(f, "Tensor{:?} [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOW).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:?}")?;
        }
        if self.data.len() > SHOW {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}
