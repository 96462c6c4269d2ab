//! Seeded generators. Every stochastic component draws from a ChaCha stream
//! derived from a single master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Stream identifiers used when deriving per-component seeds.
pub mod stream {
    pub const TREATMENT: u64 = 1;
    pub const OUTCOME: u64 = 2;
    pub const PROJECTION: u64 = 3;
    pub const SIMULATION: u64 = 4;
    pub const UNCONSTRAINED_TREATED: u64 = 5;
    pub const UNCONSTRAINED_CONTROL: u64 = 6;
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `stream` from `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn chain_rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}
