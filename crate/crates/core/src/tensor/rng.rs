//! Counter-based random numbers.
//!
//! Every generator is addressed by `(seed, stream, counter)`: the seed keys a
//! ChaCha8 block cipher, the stream selects an independent keystream, and the
//! counter is the word position inside it. Nothing is global; advancing is
//! always an explicit call on a `&mut Rng`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::dense::{Dims, Tensor};
use super::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer; used to hash labels into stream ids.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a path of labels (purpose tag, item index, ...) into a stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| mix64(acc ^ mix64(p)))
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Rng::at(seed, stream, 0)
    }

    pub fn at(seed: u64, stream: u64, counter: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        inner.set_word_pos(counter as u128);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    /// Generator on a stream derived from labels, e.g. `(TAG, image_index)`.
    pub fn derive(seed: u64, labels: &[u64]) -> Self {
        Rng::new(seed, stream_id(labels))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Position in 32-bit words since the start of the stream.
    pub fn counter(&self) -> u64 {
        self.inner.get_word_pos() as u64
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn rand_uniform_int(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "empty integer range [{lo}, {hi}]");
        let span = (hi as i128 - lo as i128 + 1) as u128;
        if span > u64::MAX as u128 {
            return self.next_u64() as i64;
        }
        let span = span as u64;
        // Rejection keeps the draw exactly uniform.
        let zone = u64::MAX - (u64::MAX % span) - 1;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return lo + (v % span) as i64;
            }
        }
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.rand_uniform_int(0, len as i64 - 1) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal pair via Box–Muller.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = std::f64::consts::TAU * u2;
        (r * th.cos(), r * th.sin())
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    pub fn fill_normal<T: Scalar>(&mut self, out: &mut [T]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = T::of(a);
            pair[1] = T::of(b);
        }
        if let [last] = chunks.into_remainder() {
            *last = T::of(self.normal_pair().0);
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Tensor of i.i.d. standard normal samples.
pub fn randn<T: Scalar>(rng: &mut Rng, dims: Dims) -> Tensor<T> {
    let mut t = Tensor::zeros(dims);
    rng.fill_normal(t.data_mut());
    t
}

pub fn rand_uniform_int(rng: &mut Rng, lo: i64, hi: i64) -> i64 {
    rng.rand_uniform_int(lo, hi)
}
