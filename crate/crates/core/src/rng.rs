//! Per-purpose random streams derived from one master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and placed on
//! its own ChaCha stream number, which gives 2^64 non-overlapping sequences
//! per seed. The stream numbers below are part of the reproducibility
//! contract and must not be renumbered:
//!
//! | stream            | number            |
//! |-------------------|-------------------|
//! | placement         | 1                 |
//! | batteries         | 2                 |
//! | traffic           | 3                 |
//! | message offsets   | 4                 |
//! | mobility, phone i | `1 << 32` + i     |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement,
    Batteries,
    Traffic,
    Offsets,
    Mobility(u32),
}

impl Stream {
    pub fn number(self) -> u64 {
        match self {
            Stream::Placement => 1,
            Stream::Batteries => 2,
            Stream::Traffic => 3,
            Stream::Offsets => 4,
            Stream::Mobility(i) => (1u64 << 32) + i as u64,
        }
    }
}

pub fn stream(seed: u64, purpose: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose.number());
    rng
}

/// All streams needed by one run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub placement: SimRng,
    pub batteries: SimRng,
    pub traffic: SimRng,
    pub offsets: SimRng,
    pub mobility: Vec<SimRng>,
}

pub fn rng_streams(seed: u64, n_phones: usize) -> RngStreams {
    RngStreams {
        placement: stream(seed, Stream::Placement),
        batteries: stream(seed, Stream::Batteries),
        traffic: stream(seed, Stream::Traffic),
        offsets: stream(seed, Stream::Offsets),
        mobility: (0..n_phones as u32)
            .map(|i| stream(seed, Stream::Mobility(i)))
            .collect(),
    }
}
