//! Seed discipline: one master seed, many independent named streams.
//!
//! Every subsystem that draws randomness gets its own ChaCha stream keyed
//! by the same master seed, so enabling an adversary never shifts the
//! random draws seen by honest parties.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Measurement randomness for honest parties ("nature").
    Nature,
    /// Per-round basis choices of honest parties and the source.
    Bases,
    /// The honest parties' pre-shared basis schedule.
    Schedule,
    /// Source-side choices (avoidance configuration, game inputs).
    Source,
    Eve,
    Byzantine,
    /// Sampling of published check rounds.
    Sampling,
    /// Independent walk of one robot.
    Walk(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Nature => 1,
            Stream::Bases => 2,
            Stream::Schedule => 3,
            Stream::Source => 4,
            Stream::Eve => 5,
            Stream::Byzantine => 6,
            Stream::Sampling => 7,
            Stream::Walk(robot) => 1_000 + robot as u64,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
