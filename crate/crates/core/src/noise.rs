//! Seeded, reproducible noise substreams.
//!
//! Each trajectory owns one `NoiseStream` identified by `(seed, stream_id)`.
//! ChaCha8 is used because its output is specified bit-for-bit, independent
//! of platform and word size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        NoiseStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Wiener increment `√dt · N(0, 1)`.
    pub fn wiener_increment(&mut self, dt: f64) -> f64 {
        dt.sqrt() * self.standard_normal()
    }
}

/// Free-function form of [`NoiseStream::wiener_increment`].
pub fn wiener_increment(noise: &mut NoiseStream, dt: f64) -> f64 {
    noise.wiener_increment(dt)
}
