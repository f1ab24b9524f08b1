//! Named random sub-streams derived from one seed.
//!
//! Every consumer of randomness draws from its own stream so that adding
//! draws in one place never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Instance,
    Trace,
    Init,
    Noise,
    Replay,
    Eval,
    Sampled,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Instance => 0x696e_7374,
            Stream::Trace => 0x7472_6163,
            Stream::Init => 0x696e_6974,
            Stream::Noise => 0x6e6f_6973,
            Stream::Replay => 0x7265_706c,
            Stream::Eval => 0x6576_616c,
            Stream::Sampled => 0x7361_6d70,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.tag())
}

pub fn stream(seed: u64, stream: Stream) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Seed of the `index`-th child of `seed` (per instance, per grid point...).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5eed)))
}
