//! Stream splitting. Every random draw belongs to a stream identified by
//! `(master seed, replicate, channel)`; the stream does not depend on how many
//! replicates exist or which worker runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channel reserved for per-replicate attribute draws.
pub const ATTRIBUTE_CHANNEL: u64 = 0;

/// Channel of component `c`.
pub fn component_channel(c: usize) -> u64 {
    1 + c as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, replicate: u64, channel: u64) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(channel.wrapping_add(0x1234_5678)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(replicate);
    rng
}
