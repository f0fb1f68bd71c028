//! Seed derivation.
//!
//! All randomness in a run flows from one user seed. Components obtain
//! independent streams by labeled splitting: the label selects a ChaCha key
//! and the index selects the ChaCha stream, so worker `i` of component `"mask"`
//! never overlaps with worker `j` or with another component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator seeded directly from `seed`.
pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream for component `label`, sub-stream `index`.
pub fn derive(seed: u64, label: &str, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(splitmix64(seed ^ splitmix64(fnv1a(label))));
    rng.set_stream(index);
    rng
}
