//! Seeded random streams.
//!
//! Every random draw in the pipeline comes from a stream derived from a single
//! master seed and an index, so results never depend on scheduling or worker
//! count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

/// Stream domains keep unrelated consumers of the same (seed, index) apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Sample = 1,
    Background = 2,
    Stats = 3,
    Training = 4,
    Sequence = 5,
    Bench = 6,
    Init = 7,
    Misc = 8,
}

/// Deterministic stream for `(master, domain, index)`.
pub fn stream(master: u64, domain: Domain, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ ((domain as u64) << 56).rotate_left(7));
    rng.set_stream(index);
    rng
}

/// Uniform draw on `[-a, a]`; `a == 0` yields exactly zero.
#[inline]
pub fn symmetric<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let u: f64 = rng.random();
    if a == 0.0 {
        0.0
    } else {
        a * (2.0 * u - 1.0)
    }
}

/// Uniform draw on `[lo, hi)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    let u: f64 = rng.random();
    u < p
}
