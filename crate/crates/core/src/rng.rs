//! Seeded random streams. Every random draw in a run comes from the run seed
//! through one of these constructors.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

const DROPOUT_STREAM: u64 = 0xd50f_0000_0000_0001;
const SHUFFLE_STREAM: u64 = 0x5eed_0000_0000_0002;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn stream(seed: u64, id: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Stream for initializing the parameter called `name`. Parameters with the
/// same name get the same values for the same seed regardless of what other
/// parameters a model has.
pub fn param_rng(seed: u64, name: &str) -> Rng {
    stream(seed, fnv1a(name) & !(1 << 63))
}

pub fn dropout_rng(seed: u64) -> Rng {
    stream(seed, DROPOUT_STREAM | (1 << 63))
}

pub fn shuffle_rng(seed: u64) -> Rng {
    stream(seed, SHUFFLE_STREAM | (1 << 63))
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (Lemire's multiply-shift, bias below 2^-32 for
/// the sizes used here).
#[inline]
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}
