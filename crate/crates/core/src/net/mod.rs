//! Two-layer policy network with action, message and value heads.

mod adam;
mod categorical;
mod checkpoint;
mod network;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState, DEFAULT_LR};
pub use categorical::{sample_categorical, Categorical};
pub use network::{
    default_hidden_width, Activation, Architecture, HeadGrads, NetOutputs, NetShape, ParamGrads, PolicyParams,
    TensorSlot, Trace,
};
