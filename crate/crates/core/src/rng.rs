//! Named random substreams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Layout,
    Env,
    Agent,
    Replay,
    Init,
    Eval,
    Synthetic,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Layout => 1,
            Stream::Env => 2,
            Stream::Agent => 3,
            Stream::Replay => 4,
            Stream::Init => 5,
            Stream::Eval => 6,
            Stream::Synthetic => 7,
        }
    }
}

/// Generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    indexed(seed, stream, 0)
}

/// Generator for `(seed, stream, index)`; distinct triples give independent
/// key material.
pub fn indexed(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.tag().to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Seed for a child run, e.g. one episode of an evaluation sweep.
pub fn child_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    use rand::Rng;
    indexed(seed, stream, index).random()
}
