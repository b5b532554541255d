//! Deterministic derivation of sub-seeds from a user-facing seed.
//!
//! Every randomized operation in this crate takes an explicit seed and owns
//! its generator state. Operations that need several independent streams
//! (sweep repetitions, Monte Carlo chunks, per-round candidate sampling)
//! derive them with `derive`, so results are reproducible bit-for-bit and
//! independent of scheduling.

/// splitmix64 finalizer; full-period mixing of a 64-bit state.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the `stream`-th sub-seed from `seed`.
pub(crate) fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}
