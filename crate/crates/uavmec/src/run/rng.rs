//! Random stream plumbing: one master seed fans out into independent
//! per-subsystem streams, so consuming more draws in one subsystem never
//! shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PLACEMENT_STREAM: u64 = 0;
const MOBILITY_STREAM: u64 = 1;
const TASKS_STREAM: u64 = 2;
const POLICY_STREAM: u64 = 3;
const SHUFFLE_STREAM_BASE: u64 = 4;

/// All random streams of a run. `shuffle` holds one stream per UAV for
/// minibatch ordering.
pub struct Streams {
    pub placement: ChaCha8Rng,
    pub mobility: ChaCha8Rng,
    pub tasks: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub shuffle: Vec<ChaCha8Rng>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn split_streams(seed: u64, num_uavs: usize) -> Streams {
    Streams {
        placement: stream(seed, PLACEMENT_STREAM),
        mobility: stream(seed, MOBILITY_STREAM),
        tasks: stream(seed, TASKS_STREAM),
        policy: stream(seed, POLICY_STREAM),
        shuffle: (0..num_uavs)
            .map(|m| stream(seed, SHUFFLE_STREAM_BASE + m as u64))
            .collect(),
    }
}
