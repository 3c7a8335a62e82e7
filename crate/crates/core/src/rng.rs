//! Deterministic random sub-streams.
//!
//! Every chain, instance or resample draws from its own generator derived
//! from `(master seed, stream index)`, so results never depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type ChainRng = Xoshiro256PlusPlus;

/// Stream tags keep unrelated consumers of one master seed apart.
pub(crate) mod tag {
    pub const BOOTSTRAP: u64 = 0x02;
    pub const TEMPERING_SWAPS: u64 = 0x03;
    pub const GENERATOR: u64 = 0x04;
    pub const EXACT_SAMPLER: u64 = 0x05;
    pub const ANNEAL: u64 = 0x06;
    pub const POSTPROCESS: u64 = 0x07;
    pub const TEMPERING_REPLICAS: u64 = 0x08;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for stream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> ChainRng {
    let mut s = [0u8; 32];
    let mut z = splitmix64(seed) ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019));
    for chunk in s.chunks_exact_mut(8) {
        z = splitmix64(z);
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    Xoshiro256PlusPlus::from_seed(s)
}

/// Generator for stream `index` under a consumer `tag`.
pub(crate) fn tagged(seed: u64, tag: u64, index: u64) -> ChainRng {
    substream(splitmix64(seed ^ tag.rotate_left(32)), index)
}

/// Child seed for an ordered tuple of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |z, &p| splitmix64(z ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d))))
}
