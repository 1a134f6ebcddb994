//! Seeding. Every stochastic stage draws from its own ChaCha stream derived
//! from a run seed and a stage tag, so stages never perturb each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StdRng = ChaCha8Rng;

pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const HOLDOUT: u64 = 2;
    pub const AVAILABLE: u64 = 3;
    pub const OVERLAP: u64 = 4;
    pub const TARGET_TRAIN: u64 = 5;
    pub const AUX_TRAIN: u64 = 6;
    pub const AUX_SUBSET: u64 = 7;
    pub const CLONE_TRAIN: u64 = 8;
    pub const FINETUNE: u64 = 9;
    pub const DEFENSE_ATTACK: u64 = 10;
    pub const DEFENSE_EVAL: u64 = 11;
    pub const INIT: u64 = 12;
    pub const SAMPLING: u64 = 13;
    pub const QUERY_USERS: u64 = 14;
}

/// SplitMix64 finalizer over `seed ^ stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> StdRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(seed: u64, stream: u64) -> StdRng {
    rng_from_seed(derive_seed(seed, stream))
}

/// Moves a uniform random `n`-subset of `items` to the front, in draw
/// order: for `t` in `0..n`, swap slot `t` with a slot drawn by
/// `rng.gen_range(t..len)`.
pub fn partial_shuffle<T, R: rand::Rng + ?Sized>(items: &mut [T], n: usize, rng: &mut R) {
    let len = items.len();
    for t in 0..n.min(len) {
        let j = rng.gen_range(t..len);
        items.swap(t, j);
    }
}
