//! Named random streams split from a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Data,
    Curriculum,
    Eval,
    Probe,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Data => 2,
            Stream::Curriculum => 3,
            Stream::Eval => 4,
            Stream::Probe => 5,
        }
    }
}

/// Independent generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Generator keyed by `(seed, stream, index)`, e.g. one per training step.
pub fn indexed(seed: u64, s: Stream, index: u64) -> StreamRng {
    let mut rng = stream(seed, s);
    // 2^36 words per index is far more than any single draw consumes.
    rng.set_word_pos((index as u128) << 36);
    rng
}
