//! Planar float images.

use crate::tensor::{Dims, Tensor, TensorError};

/// Planar (channel-major) float image. Pixel values live in `[0, 1]` outside
/// the diffusion model; inside it they are mapped to `[-1, 1]`.
#[derive(Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

/// ITU-R BT.601 luma weights (also used by JFIF).
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0 && channels > 0, "empty image");
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * channels, "planar buffer size");
        assert!(width > 0 && height > 0 && channels > 0, "empty image");
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    /// `f(channel, y, x)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image::from_planar(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Luma plane for RGB input, the single plane for grayscale.
    pub fn luma(&self) -> Vec<f64> {
        let n = self.width * self.height;
        if self.channels < 3 {
            return self.plane(0).iter().map(|&v| v as f64).collect();
        }
        (0..n)
            .map(|i| {
                LUMA[0] * self.data[i] as f64
                    + LUMA[1] * self.data[n + i] as f64
                    + LUMA[2] * self.data[2 * n + i] as f64
            })
            .collect()
    }

    /// Copy of the `size`×`size` window at `(top, left)`.
    pub fn crop(&self, left: usize, top: usize, width: usize, height: usize) -> Image {
        assert!(left + width <= self.width && top + height <= self.height, "crop out of bounds");
        Image::from_fn(width, height, self.channels, |c, y, x| {
            self.get(c, top + y, left + x)
        })
    }

    /// `[0,1] → [-1,1]` tensor of shape `(1, C, H, W)`.
    pub fn to_model_tensor(&self) -> Tensor {
        let dims = Dims::new(1, self.channels, self.height, self.width);
        Tensor::from_vec(dims, self.data.iter().map(|&v| 2.0 * v - 1.0).collect())
            .expect("image dims are positive")
    }

    /// Inverse of [`to_model_tensor`](Self::to_model_tensor) for sample `n`,
    /// clamped to `[0, 1]`.
    pub fn from_model_tensor(t: &Tensor, n: usize) -> Result<Image, TensorError> {
        let d = t.dims();
        if n >= d.n {
            return Err(TensorError::Invalid(format!("sample {n} out of batch {}", d.n)));
        }
        let data = t
            .sample(n)
            .iter()
            .map(|&v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
            .collect();
        Ok(Image::from_planar(d.w, d.h, d.c, data))
    }

    pub fn batch_to_model_tensor(images: &[Image]) -> Result<Tensor, TensorError> {
        let parts: Vec<Tensor> = images.iter().map(Image::to_model_tensor).collect();
        Tensor::stack(&parts)
    }
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{}x{})", self.width, self.height, self.channels)
    }
}
