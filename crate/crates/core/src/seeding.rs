//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit seed. Independent work items
//! (one generated sample, one protocol repetition) draw from their own
//! ChaCha stream keyed by `(seed, index)`, so results do not depend on how
//! work is partitioned across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Derive a child seed for a named sub-task, e.g. the classifier trained
/// inside an evaluation protocol.
pub fn derive(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag mixed with the seed; stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn normal_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
