//! Deterministic random substreams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

// Stream tags, so that channel draws never share a stream with phase trials.
pub const TAG_CHANNEL: u64 = 0x6368_616e;
pub const TAG_SCHEME: u64 = 0x7363_6865;
pub const TAG_TRIAL: u64 = 0x7472_6961;
pub const TAG_SYMBOLS: u64 = 0x7379_6d62;
pub const TAG_SAMPLE: u64 = 0x7361_6d70;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream identified by `tags` under `master`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn substream(master: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, tags))
}

/// Stable 64-bit FNV-1a hash, used to key streams by scheme label.
pub fn label_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
