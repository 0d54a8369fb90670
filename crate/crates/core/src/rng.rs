//! Seed derivation.
//!
//! Every random draw in the crate descends from one root seed. Stages and
//! sample indices get their own streams through [`derive_seed`], so a sample's
//! value depends only on `(root, label, index)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed, a stage label and an index into a child seed.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix(root);
    for chunk in label.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix(h ^ u64::from_le_bytes(word));
    }
    h = splitmix(h ^ label.len() as u64);
    splitmix(h ^ index)
}

/// A fresh generator for `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the `index`-th draw of a stage.
pub fn stream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(root, label, index))
}
