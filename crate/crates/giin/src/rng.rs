//! Seed derivation for named random sub-streams.
//!
//! Every source of randomness in the pipeline (parameter init, epoch
//! shuffles, augmentation, synthetic data) draws from its own stream,
//! derived from the single experiment seed plus string tags. Streams are
//! independent of call order, so e.g. augmenting examples in parallel
//! yields the same images as augmenting them sequentially.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the seed bytes and tags, finished with a splitmix64 mix.
pub fn derive_seed(root: u64, tags: &[&str]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in root.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    for tag in tags {
        for b in tag.as_bytes() {
            h = (h ^ *b as u64).wrapping_mul(FNV_PRIME);
        }
        // Separator byte so ("ab","c") != ("a","bc").
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible RNG for the named sub-stream.
pub fn stream(root: u64, tags: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}
