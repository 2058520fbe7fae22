//! Seeding discipline: every consumer of randomness draws from its own
//! named ChaCha stream derived from the single master seed, so one
//! component's draw count never perturbs another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named random streams of the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamId {
    /// Normalization-statistics snapshots.
    Stats,
    /// Network weight initialization.
    Init,
    /// Training scenario resets and in-episode world randomness.
    Scenario,
    /// Epsilon-greedy action draws.
    Action,
    /// Replay minibatch sampling.
    Replay,
    /// Evaluation scenario resets, indexed per episode.
    EvalScenario,
    /// Observation-noise draws, indexed per episode.
    EvalNoise,
    /// Evaluation-time greedy tie/epsilon draws, indexed per episode.
    EvalAction,
}

impl StreamId {
    fn ordinal(self) -> u64 {
        match self {
            StreamId::Stats => 0,
            StreamId::Init => 1,
            StreamId::Scenario => 2,
            StreamId::Action => 3,
            StreamId::Replay => 4,
            StreamId::EvalScenario => 5,
            StreamId::EvalNoise => 6,
            StreamId::EvalAction => 7,
        }
    }
}

/// RNG for a named stream. `index` sub-divides a stream (one per
/// evaluation episode); pass 0 for singleton streams.
pub fn stream_rng(master_seed: u64, stream: StreamId, index: u64) -> ChaCha8Rng {
    assert!(index < 1 << 56, "stream index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((stream.ordinal() << 56) | index);
    rng
}

/// Serializable position of one stream, for checkpoint resume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPos {
    pub stream: StreamId,
    pub word_pos: u128,
}

pub fn save_pos(stream: StreamId, rng: &ChaCha8Rng) -> StreamPos {
    StreamPos {
        stream,
        word_pos: rng.get_word_pos(),
    }
}

pub fn restore(master_seed: u64, pos: &StreamPos) -> ChaCha8Rng {
    let mut rng = stream_rng(master_seed, pos.stream, 0);
    rng.set_word_pos(pos.word_pos);
    rng
}
