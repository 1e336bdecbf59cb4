use serde::{Deserialize, Serialize};

use super::payoffs::{sample_random_payoffs, FixedGame, PayoffPair};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Agent identity. Serialized as 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentId {
    One,
    Two,
}

impl AgentId {
    pub const BOTH: [AgentId; 2] = [AgentId::One, AgentId::Two];

    pub fn index(self) -> usize {
        match self {
            AgentId::One => 0,
            AgentId::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn other(self) -> AgentId {
        match self {
            AgentId::One => AgentId::Two,
            AgentId::Two => AgentId::One,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(AgentId::One),
            2 => Ok(AgentId::Two),
            _ => Err(Error::config(format!("agent must be 1 or 2, got {n}"))),
        }
    }
}

impl Serialize for AgentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        AgentId::from_number(n).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffMode<T> {
    Randomized { mean: T, variance: T },
    Fixed(FixedGame),
}

/// Who opens the message exchange each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpeakerOrder {
    #[default]
    Random,
    Always(AgentId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig<T> {
    pub n_actions: usize,
    pub n_messages: usize,
    pub payoff_mode: PayoffMode<T>,
    pub iterated: bool,
    pub memory_len: usize,
    pub scramble: bool,
    pub message_cost: T,
    pub speaker_order: SpeakerOrder,
}

/// Channel size used for each payoff size of the standard grid: a few
/// symbols more than there are actions.
pub fn default_channel_size(n_actions: usize) -> usize {
    match n_actions {
        2 => 4,
        4 => 6,
        8 => 10,
        n => n + 2,
    }
}

pub const DEFAULT_MEMORY_LEN: usize = 5;
pub const DEFAULT_PAYOFF_VARIANCE: f64 = 3.0;

impl<T: Scalar> GameConfig<T> {
    /// Randomized `N(0, 3)` payoffs with the default channel for `n_actions`.
    pub fn randomized(n_actions: usize) -> Self {
        Self {
            n_actions,
            n_messages: default_channel_size(n_actions),
            payoff_mode: PayoffMode::Randomized {
                mean: T::zero(),
                variance: T::lit(DEFAULT_PAYOFF_VARIANCE),
            },
            iterated: false,
            memory_len: 0,
            scramble: false,
            message_cost: T::zero(),
            speaker_order: SpeakerOrder::Random,
        }
    }

    pub fn fixed(game: FixedGame) -> Self {
        Self {
            payoff_mode: PayoffMode::Fixed(game),
            ..Self::randomized(2)
        }
    }

    pub fn with_iterated(mut self) -> Self {
        self.iterated = true;
        self.memory_len = DEFAULT_MEMORY_LEN;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_actions == 0 {
            return Err(Error::config("n_actions must be at least 1"));
        }
        if self.n_messages == 0 {
            return Err(Error::config("n_messages must be at least 1"));
        }
        if self.message_cost != T::zero() {
            return Err(Error::config("message_cost must be 0 (only cheap talk is supported)"));
        }
        if self.iterated && self.memory_len == 0 {
            return Err(Error::config("iterated games need memory_len >= 1"));
        }
        match self.payoff_mode {
            PayoffMode::Randomized { mean, variance } => {
                if !mean.is_finite() {
                    return Err(Error::config("payoff_mean must be finite"));
                }
                if !(variance > T::zero()) || !variance.is_finite() {
                    return Err(Error::config("payoff_variance must be positive"));
                }
            }
            PayoffMode::Fixed(_) => {
                if self.n_actions != 2 {
                    return Err(Error::config("fixed games are 2x2; set n_actions = 2"));
                }
            }
        }
        Ok(())
    }

    /// Effective memory length (0 for one-shot games).
    pub fn memory_rounds(&self) -> usize {
        if self.iterated {
            self.memory_len
        } else {
            0
        }
    }

    pub fn sample_payoffs<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<PayoffPair<T>> {
        match self.payoff_mode {
            PayoffMode::Randomized { mean, variance } => sample_random_payoffs(rng, self.n_actions, mean, variance),
            PayoffMode::Fixed(game) => Ok(game.payoffs()),
        }
    }
}
