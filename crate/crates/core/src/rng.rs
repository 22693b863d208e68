//! Named, independent random streams derived from one experiment seed.
//!
//! Each stream is a ChaCha8 generator keyed by the seed with a distinct
//! stream id, so draws on one stream never shift another. This is what lets
//! all strategies at a given seed share identical passive-phase data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Noise,
    PassiveInputs,
    InitWeights,
    Committee,
    TestInputs,
    TestNoise,
    Custom(u64),
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Noise => 1,
            Stream::PassiveInputs => 2,
            Stream::InitWeights => 3,
            Stream::Committee => 4,
            Stream::TestInputs => 5,
            Stream::TestNoise => 6,
            Stream::Custom(n) => 1000 + n,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
