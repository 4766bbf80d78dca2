//! Dense rank-4 tensors with define-by-run reverse-mode autodiff, a
//! counter-based RNG, and the Adam/EMA optimizers needed to train the
//! denoiser.

mod dense;
pub mod embed;
pub mod kernels;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tape;

pub use dense::{Dims, Tensor};
pub use embed::sinusoidal_time_embedding;
pub use kernels::Padding;
pub use optim::{ema_update, Adam, AdamConfig, ParamSet};
pub use rng::{rand_uniform_int, randn, Rng};
pub use scalar::Scalar;
pub use tape::{l1_loss, scale_add, Gradients, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: expected dims {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Dims,
        got: Dims,
    },
    #[error("data length {len} does not match dims {dims:?}")]
    DataLength { dims: Dims, len: usize },
    #[error("tensor dims must be positive, got {0:?}")]
    EmptyDims(Dims),
    #[error("expected a scalar, got dims {0:?}")]
    NotScalar(Dims),
    #[error("{0}")]
    Invalid(String),
}
