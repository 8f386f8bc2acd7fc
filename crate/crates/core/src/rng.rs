//! Deterministic random streams keyed by (master seed, indices).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one unit of work, e.g. `stream(seed, &[grid_index, patch_index])`.
///
/// Distinct key paths give unrelated seeds; the same path always gives the
/// same stream regardless of thread or platform.
pub fn stream(master: u64, keys: &[u64]) -> StreamRng {
    let mut state = master;
    let mut mixed = splitmix64(&mut state);
    for &k in keys {
        state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(mixed);
        mixed = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Well-known key tags so unrelated consumers of one master seed never collide.
pub mod domain {
    pub const DESIGN: u64 = 1;
    pub const PATCHES: u64 = 2;
    pub const EVAL_PATCHES: u64 = 3;
    pub const EVALUATION: u64 = 4;
}
