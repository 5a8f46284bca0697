//! Seeded random streams.
//!
//! Every stream is ChaCha8 keyed by a 64-bit seed, with an optional 64-bit
//! stream selector for independent sub-streams (per training step, per
//! sample, per partition). Draw sequences are platform independent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream under the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Standard normal truncated to `[-2, 2]` by rejection.
    pub fn truncated_normal(&mut self) -> f64 {
        loop {
            let z = self.normal();
            if z.abs() <= 2.0 {
                return z;
            }
        }
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        items.shuffle(&mut self.inner);
    }

    pub fn normal_tensor<T: Scalar>(&mut self, shape: impl Into<Vec<usize>>, std: f64) -> Tensor<T> {
        Tensor::from_fn(shape, |_| T::lit(std * self.normal()))
    }

    pub fn truncated_normal_tensor<T: Scalar>(
        &mut self,
        shape: impl Into<Vec<usize>>,
        std: f64,
    ) -> Tensor<T> {
        Tensor::from_fn(shape, |_| T::lit(std * self.truncated_normal()))
    }
}
