//! Seeded randomness.
//!
//! The generator is ChaCha8 (counter based), keyed by `seed_from_u64(seed)`.
//! Independent consumers (weight init, shuffling, reparametrization noise,
//! data generation) draw from separate ChaCha streams of the same key, so
//! e.g. switching sampling off does not perturb the minibatch order.
//! Normal draws use the ziggurat sampler from `rand_distr`; all arithmetic is
//! IEEE `f64`, so streams are bit-identical across platforms that agree on
//! `f64::exp`/`ln` for the ziggurat tail (the tail is hit rarely).

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// Named streams so call sites cannot collide by accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Noise = 3,
    Data = 4,
    Prior = 5,
    Injection = 6,
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A fresh generator on an independent stream of the same seed.
    pub fn stream(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream as u64);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[low, high)`.
    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `n` independent standard normal draws as a vector tensor.
pub fn standard_normal(rng: &mut Rng, n: usize) -> Tensor {
    let mut data = vec![0.0; n];
    rng.fill_normal(&mut data);
    Tensor::from_vec(data)
}
