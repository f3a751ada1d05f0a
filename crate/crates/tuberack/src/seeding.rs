//! Named sub-streams derived from one scenario seed, so perception, motion,
//! and fault draws do not perturb each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `(seed, label)`.
pub fn substream(seed: u64, label: &str) -> ChaCha8Rng {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET ^ seed;
    h = h.wrapping_mul(PRIME);
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(PRIME);
    }
    ChaCha8Rng::seed_from_u64(h)
}
