//! Deterministic RNG substream derivation.
//!
//! All randomness in the crate flows from a single `u64` seed. Each logical
//! consumer (population traits, scheduling, message draws, ...) gets its own
//! substream keyed by a domain tag plus an index (usually a member id), so
//! generation order and thread count never change the output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep substreams for different pipeline stages disjoint even
/// when they share an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    PopulationTraits = 1,
    GraphCalibration = 2,
    GraphEdges = 3,
    AnniversaryWeek = 4,
    AnniversaryDay = 5,
    Messages = 6,
    PersonEffect = 7,
    WeekEffect = 8,
    WeeklyShock = 9,
    PageviewNoise = 10,
    ExperimentCorpus = 11,
}

/// SplitMix64 finalizer; a cheap, well-mixed 64-bit permutation.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// An independent RNG for `(seed, domain, index)`. The key is derived from
/// `(seed, domain)` and the index selects the ChaCha stream, so substreams
/// with different indices never overlap.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ mix64(domain as u64);
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A uniform draw in `[0, 1)` addressed by a pair of indices. Used for
/// per-pair Bernoulli edge draws, where deriving a full RNG would be wasteful
/// and the draw must not depend on enumeration order.
#[inline]
pub fn pair_unit(seed: u64, domain: Domain, a: u64, b: u64) -> f64 {
    let h = mix64(seed ^ mix64(domain as u64) ^ mix64(a).wrapping_add(mix64(b).rotate_left(17)));
    // 53 high bits -> [0, 1)
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
