use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Activation;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Reinforce,
    A2c,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    /// Observed messages are uniform redraws unrelated to the sent ones.
    ScrambledC,
    /// Messages come from a network sharing no parameters with the action path.
    SeparateCNet,
    /// The message head is never updated.
    NoCTraining,
    /// Messages are forced uniform at emission and never trained.
    RandomC,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::None,
        Ablation::ScrambledC,
        Ablation::SeparateCNet,
        Ablation::NoCTraining,
        Ablation::RandomC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::ScrambledC => "scrambled_c",
            Ablation::SeparateCNet => "separate_c_net",
            Ablation::NoCTraining => "no_c_training",
            Ablation::RandomC => "random_c",
        }
    }

    /// Whether the message head receives any gradient.
    pub fn trains_comm(self) -> bool {
        !matches!(self, Ablation::NoCTraining | Ablation::RandomC)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let valid: Vec<_> = Ablation::ALL.iter().map(|a| a.name()).collect();
            Error::config(format!("unknown ablation '{s}'; valid: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig<T> {
    pub lambda_c: T,
    pub lambda_ent: T,
    pub lambda_v: T,
    pub lr: T,
    pub batch_size: usize,
    pub gamma: T,
    pub n_step: usize,
    pub episodes: usize,
    pub algo: Algo,
    pub ablation: Ablation,
    /// Rounds per episode in iterated games.
    pub rounds_per_game: usize,
    /// Episodes per training-log window.
    pub log_window: usize,
    /// Trunk width; `None` picks the default for the game size.
    pub hidden_width: Option<usize>,
    pub activation: Activation,
}

pub const DEFAULT_EPISODES: usize = 250_000;
pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_ROUNDS_PER_GAME: usize = 20;
pub const DEFAULT_LOG_WINDOW: usize = 1000;

impl<T: Scalar> Default for LearnConfig<T> {
    fn default() -> Self {
        Self {
            lambda_c: T::lit(0.1),
            lambda_ent: T::lit(0.01),
            lambda_v: T::lit(0.1),
            lr: T::lit(0.005),
            batch_size: DEFAULT_BATCH,
            gamma: T::zero(),
            n_step: 5,
            episodes: DEFAULT_EPISODES,
            algo: Algo::Reinforce,
            ablation: Ablation::None,
            rounds_per_game: DEFAULT_ROUNDS_PER_GAME,
            log_window: DEFAULT_LOG_WINDOW,
            hidden_width: None,
            activation: Activation::Relu,
        }
    }
}

impl<T: Scalar> LearnConfig<T> {
    /// A2C defaults for iterated games: discount 0.9, 5-step returns.
    pub fn a2c() -> Self {
        Self {
            gamma: T::lit(0.9),
            algo: Algo::A2c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_c", self.lambda_c),
            ("lambda_ent", self.lambda_ent),
            ("lambda_v", self.lambda_v),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        if !(self.lr > T::zero()) {
            return Err(Error::config("lr must be positive"));
        }
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes must be at least 1"));
        }
        if self.n_step == 0 {
            return Err(Error::config("n_step must be at least 1"));
        }
        if self.algo == Algo::A2c && self.rounds_per_game == 0 {
            return Err(Error::config("rounds_per_game must be at least 1"));
        }
        if self.hidden_width == Some(0) {
            return Err(Error::config("hidden_width must be at least 1"));
        }
        if self.log_window == 0 {
            return Err(Error::config("log_window must be at least 1"));
        }
        Ok(())
    }

    /// Number of optimizer steps each agent takes over a full run.
    pub fn optimizer_steps(&self) -> usize {
        self.episodes.div_ceil(self.batch_size)
    }
}
