//! Adaptive window sampling for fine-tuning pretrained probabilistic
//! forecasters.
//!
//! A forecaster is pretrained on uniformly drawn windows. Its upper layers
//! are then fine-tuned on windows whose start is drawn from a learned
//! distribution over recency, chosen by Bayesian optimization against a
//! validation channel carved from the end of the history.

pub mod bayesopt;
pub mod commands;
pub mod error;
pub mod forecaster;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
