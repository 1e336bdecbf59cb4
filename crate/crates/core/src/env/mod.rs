//! Matrix communication games: payoffs, observations and the round loop.

mod config;
mod observation;
mod payoffs;
mod round;

pub use config::{
    default_channel_size, AgentId, GameConfig, PayoffMode, SpeakerOrder, DEFAULT_MEMORY_LEN, DEFAULT_PAYOFF_VARIANCE,
};
pub use observation::{build_observation, MemoryBuffer, MemoryEntry, ObsLayout, ObsVector, Phase};
pub use payoffs::{fixed_payoffs, sample_random_payoffs, FixedGame, PayoffPair};
pub use round::{
    env_step, env_step_observed, read_jsonl, write_jsonl, RoundObservations, RoundPolicy, RoundRecord, Stamp,
};
