//! Named random streams split from one master seed, so that runs which differ
//! only in the learning rule consume identical prompt and oracle draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Prompt,
    Policy,
    Sampler,
    Oracle,
    /// Probe pairs used for coverage diagnostics.
    Probe,
    WorldFeatures,
    WorldParameter,
    Projection,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Prompt => 1,
            Stream::Policy => 2,
            Stream::Sampler => 3,
            Stream::Oracle => 4,
            Stream::Probe => 5,
            Stream::WorldFeatures => 11,
            Stream::WorldParameter => 12,
            Stream::Projection => 13,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
