//! Seed derivation. Every sample is drawn from its own generator keyed by
//! `(seed, stream, n, k)`, so samplers are pure functions of those indices and
//! replays are bit-identical regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sample streams for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Train,
    Test,
    Upfront,
    Setup,
    Aux(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Train => 1,
            Stream::Test => 2,
            Stream::Upfront => 3,
            Stream::Setup => 4,
            Stream::Aux(k) => 0x1000 + k,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, n: u64, k: u64) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ stream.tag());
    h = splitmix(h ^ n);
    splitmix(h ^ k)
}

pub fn rng_for(seed: u64, stream: Stream, n: u64, k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, n, k))
}
