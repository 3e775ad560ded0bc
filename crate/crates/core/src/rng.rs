//! Reproducible random streams.
//!
//! Every stochastic operation (splits, initialization, dropout, the
//! reparameterization noise, epoch shuffles) draws from a [`RngStream`]. The
//! generator is ChaCha8 keyed by `rand_core`'s `seed_from_u64` expansion of
//! the run seed; independent purposes get independent ChaCha stream ids
//! derived from a list of integer tags with SplitMix64 mixing. Because a
//! stream is a pure function of `(seed, tags)`, any draw can be replayed
//! without carrying generator state around (which is what makes training
//! resumable).
//!
//! * uniform `f64`: the top 53 bits of one `u64` output, scaled by 2^-53,
//!   giving values in `[0, 1)`.
//! * standard normal: Box–Muller on two uniforms, both outputs used (the
//!   sine branch is cached for the next call).
//! * bounded integers: Lemire's multiply-and-reject on `u64` outputs.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Tags naming the purpose of a derived stream.
pub mod purpose {
    pub const SPLIT_USERS: u64 = 1;
    pub const SPLIT_ITEMS: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const EXAMPLE: u64 = 5;
    pub const SAMPLE: u64 = 6;
    pub const FIXTURE: u64 = 7;
    pub const PCA: u64 = 8;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Stream for `(seed, tags)`; distinct tag lists give independent streams.
    pub fn derived(seed: u64, tags: &[u64]) -> Self {
        let mut id = 0x5EED_u64;
        for &t in tags {
            id = splitmix64(id ^ splitmix64(t));
        }
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Self {
            seed,
            inner,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
