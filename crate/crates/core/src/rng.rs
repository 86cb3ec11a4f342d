//! Seeded random streams. All randomness in the crate flows through
//! [`seeded`] so that every result is reproducible from its seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (fold, class, event...).
pub fn derive(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_add(1));
    rng
}

pub fn normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform(rng: &mut SeededRng) -> f64 {
    rng.random::<f64>()
}

pub fn below(rng: &mut SeededRng, n: usize) -> usize {
    rng.random_range(0..n)
}

pub fn shuffle<T>(rng: &mut SeededRng, items: &mut [T]) {
    items.shuffle(rng);
}

/// Folds `parts` into `seed` with a splitmix64 finaliser.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
