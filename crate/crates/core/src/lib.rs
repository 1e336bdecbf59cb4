//! Matrix communication games with policy-gradient agents, and the
//! metrics used to tell signaling apart from listening.

pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod probes;
pub mod rng;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar used by the harness.
pub type Real = f64;
pub type Params = net::PolicyParams<Real>;
pub type Game = env::GameConfig<Real>;
pub type Learn = train::LearnConfig<Real>;
pub type Record = env::RoundRecord<Real>;
pub type Pair = train::TrainedPair<Real>;
