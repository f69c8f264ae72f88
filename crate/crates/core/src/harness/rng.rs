//! Deterministic random streams.
//!
//! Run `i` of a campaign uses the seed `base_seed + i` (wrapping). Within a
//! run every noise source gets its own stream, keyed by a source tag and the
//! agent ids involved, so adding agents or edges never shifts the noise seen
//! by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named noise sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    ProcessX(usize),
    ProcessY(usize),
    Range { observer: usize, target: usize },
    Bearing { observer: usize, target: usize },
    /// Draw of the initial estimation error of a follower.
    InitialEstimate(usize),
}

impl Stream {
    fn key(self) -> (u64, u64, u64) {
        match self {
            Stream::ProcessX(a) => (1, a as u64, 0),
            Stream::ProcessY(a) => (2, a as u64, 0),
            Stream::Range { observer, target } => (3, observer as u64, target as u64),
            Stream::Bearing { observer, target } => (4, observer as u64, target as u64),
            Stream::InitialEstimate(a) => (5, a as u64, 0),
        }
    }
}

pub fn run_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(run_seed: u64, stream: Stream) -> u64 {
    let (tag, a, b) = stream.key();
    [tag, a, b].into_iter().fold(mix(run_seed), |h, v| mix(h ^ v))
}

pub fn stream_rng(run_seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(run_seed, stream))
}
