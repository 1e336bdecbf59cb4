//! Policy-gradient training of agent pairs.

mod config;
mod loss;
mod returns;
mod trainer;

pub use config::{
    Ablation, Algo, LearnConfig, DEFAULT_BATCH, DEFAULT_EPISODES, DEFAULT_LOG_WINDOW, DEFAULT_ROUNDS_PER_GAME,
};
pub use loss::{round_loss, PhaseOutputs, RoundLoss, RoundLossTerms};
pub use returns::n_step_return;
pub use trainer::{
    effective_game, initial_pair, message_modes, net_shape, play_games, play_games_observed, train, train_observed,
    train_truthful_signaler, Actor, MessageMode, TrainLog, TrainedPair, WindowStats,
};
