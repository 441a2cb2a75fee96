//! Seed derivation for the independent random substreams.
//!
//! Each consumer (geometry, channel draws, pilot noise, solver start point)
//! gets its own ChaCha key derived from the user seed. Channel and pilot draws
//! additionally select a ChaCha stream per `(ap, user)` link, so the numbers a
//! link sees do not depend on how many other links exist or in which order
//! they are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GEOMETRY: u64 = 0x6765_6f6d;
pub const CHANNEL: u64 = 0x6368_616e;
pub const PILOT: u64 = 0x7069_6c6f;
pub const SOLVER_INIT: u64 = 0x696e_6974;

/// SplitMix64 finalizer over `seed ^ purpose`.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = (seed ^ purpose.rotate_left(32)).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator dedicated to one `(ap, user)` link for the given purpose.
pub fn link_rng(seed: u64, purpose: u64, ap: usize, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose));
    rng.set_stream(((ap as u64) << 32) | user as u64);
    rng
}
