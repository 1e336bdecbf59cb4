//! Signaling and listening metrics.
//!
//! All information quantities are in nats.

mod causal;
mod context;
mod information;
mod norm;

pub use causal::{
    causal_influence, interventional_mi, ActionAsMessage, ActionDistribution, CicReport, MessageDistribution,
    UniformMessages, DEFAULT_CIC_EPSILON,
};
pub use context::{context_independence, context_independence_from_counts, ConceptExtractor, OwnAction};
pub use information::{
    entropy_of_counts, instantaneous_coordination, message_action_counts, message_entropy, mutual_information,
    speaker_consistency, CooccurrenceMatrix,
};
pub use norm::{message_input_norm, payoff_input_norm};
