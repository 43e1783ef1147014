//! Per-trial seed derivation.
//!
//! `mix(base, a, b) = f(f(f(base) ^ a) ^ b)` where `f` is the SplitMix64
//! output function applied after adding the golden-ratio increment. Each
//! trial seeds a `ChaCha8Rng` via `seed_from_u64`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 step: increment then avalanche.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial_index` at grid position `nu_index`.
pub fn mix(base_seed: u64, nu_index: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ nu_index) ^ trial_index)
}

/// Stream tag used in place of a grid index for no-change trials.
pub const NO_CHANGE_STREAM: u64 = u64::MAX;
