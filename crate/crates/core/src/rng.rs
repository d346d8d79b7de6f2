//! Deterministic RNG streams.
//!
//! All randomness in a run flows from one root seed. Named sub-streams
//! (`data`, `train`, `sample`, `eval`) and per-index derivations (chain
//! index, training step) are obtained by mixing the seed, a stream label,
//! and an index through SplitMix64 before seeding a ChaCha12 generator.
//! Streams are therefore reproducible regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for a named sub-stream of the root seed.
pub fn stream(seed: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ label_hash(label)))
}

/// RNG for element `index` of a named sub-stream (sampling chain, training
/// step, scene index, ...).
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(
        splitmix64(seed ^ label_hash(label)) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15),
    ))
}
