//! Seed derivation. Every random consumer gets its own ChaCha stream keyed by
//! the master seed and a fixed label, so switching instrumentation on or off
//! never shifts another consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const STREAM_LAYOUT: u64 = 1;
pub const STREAM_ENDOWMENTS: u64 = 2;
pub const STREAM_DESIGN: u64 = 3;
/// Seller `j` draws from stream `STREAM_POLICY_BASE + j`.
pub const STREAM_POLICY_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, label: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

/// SplitMix64 finalizer over `(master, index)`, used for per-row and
/// per-replicate seeds in batch designs.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
