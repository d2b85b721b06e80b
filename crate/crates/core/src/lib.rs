//! Deterministic multi-armed bandit laboratory for studying the sign of the
//! sample-mean bias when sampling, stopping and choosing are adaptive.
//!
//! A run is a pure function of a strategy, a counterfactual table of reward
//! draws and a seed stream. Overriding one table cell and replaying the run
//! is how the [`lab`] module checks monotonicity of a strategy; repeating
//! runs over derived seeds is how [`estimators`] measures bias.

pub mod choosing;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod lab;
pub mod model;
mod one_based;
pub mod posterior;
pub mod rng;
pub mod sampling;
pub mod stopping;

pub use choosing::ChoosingRule;
pub use dist::ArmSpec;
pub use error::{Error, Result};
pub use model::{run_strategy, CounterfactualTable, StopStatus, StrategySpec, Trace};
pub use rng::SeedStream;
pub use sampling::SamplingRule;
pub use stopping::StoppingRule;
