//! Ensemble-critic TD3 with hindsight relabeling and uncertainty-weighted
//! behaviour cloning, on small goal-conditioned sparse-reward tasks.
//!
//! Module map:
//!
//! - [`nn`]: fixed-topology MLP, exact backprop, Adam, Polyak averaging.
//! - [`env`]: point-mass reach/push tasks, scripted demonstrators, demo files.
//! - [`replay`]: replay and demo buffers, "final"-goal relabeling, Welford normalizer.
//! - [`weighting`]: ensemble statistics and every demo-weight rule.
//! - [`agent`]: the actor/critic-ensemble learner.
//! - [`harness`]: run configuration, training loop, metrics and checkpoints.
//! - [`analysis`]: numerical checks of the weighting theory and figure-style reports.

pub mod agent;
pub mod analysis;
mod error;
pub mod env;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod verify;
pub mod weighting;

pub use error::{Error, Result};
