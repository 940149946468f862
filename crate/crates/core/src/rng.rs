//! Named random sub-streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by the
//! user seed, a stream tag and an index (curve id, replication number).
//! Results therefore do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_SUBSET: u64 = 0x5355_4253_4554; // "SUBSET"
pub const TAG_CURVE: u64 = 0x4355_5256_45; // "CURVE"
pub const TAG_REPLICATION: u64 = 0x5245_504c; // "REPL"

pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. for replication `index` of a benchmark.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    use rand::Rng;
    substream(seed, tag, index).random()
}
