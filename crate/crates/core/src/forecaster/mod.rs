//! Minimal autoregressive probabilistic forecaster.
//!
//! A stack of GRU layers reads the mean-scaled lagged target and a Gaussian
//! head emits `(mu, sigma)` for the next step. All weights live in one flat
//! vector; the adaptive subset is the layers above the first plus the head.

mod checkpoint;
mod forecast;
pub(crate) mod network;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use network::Layout;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use forecast::forecast;
pub use network::{param_count, GaussianHead, SIGMA_FLOOR};
pub use train::{train, SampledStart, TrainOutcome, Trainable, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            num_layers: 2,
            hidden_size: 40,
            dropout: 0.1,
            learning_rate: 1e-3,
            epochs: 100,
            batches_per_epoch: 50,
            batch_size: 32,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::invalid("num_layers", "must be positive"));
        }
        if self.hidden_size == 0 {
            return Err(Error::invalid("hidden_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout", format!("{} is not in [0, 1)", self.dropout)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be finite and nonnegative"));
        }
        if self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::invalid("batch", "batches_per_epoch and batch_size must be positive"));
        }
        Ok(())
    }

    /// Same architecture, checked before fine-tuning with a second config.
    pub fn same_architecture(&self, other: &NetConfig) -> bool {
        self.num_layers == other.num_layers && self.hidden_size == other.hidden_size
    }
}

/// The full weight vector `w_pre` with the adaptive subset marked.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPartition {
    pub config: NetConfig,
    pub weights: Vec<f64>,
    pub ada_mask: Vec<bool>,
    pub seed: u64,
}

impl WeightPartition {
    pub(crate) fn layout(&self) -> Layout {
        Layout::from_config(&self.config)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn adaptive_count(&self) -> usize {
        self.ada_mask.iter().filter(|m| **m).count()
    }

    /// Frozen coordinates, in index order.
    pub fn frozen(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.ada_mask)
            .enumerate()
            .filter(|(_, (_, m))| !**m)
            .map(|(i, (w, _))| (i, *w))
    }

    /// Maximal runs of `true` in the mask as `[start, len]`.
    pub fn ada_mask_runs(&self) -> Vec<[usize; 2]> {
        mask_runs(&self.ada_mask)
    }

    /// Rebuilds the mask from runs; used when reading checkpoints.
    pub fn mask_from_runs(len: usize, runs: &[[usize; 2]]) -> Result<Vec<bool>> {
        let mut mask = vec![false; len];
        for &[start, n] in runs {
            if start + n > len {
                return Err(Error::invalid("ada_mask_runs", format!("run [{start}, {n}] exceeds {len}")));
            }
            mask[start..start + n].iter_mut().for_each(|m| *m = true);
        }
        Ok(mask)
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        let expected = param_count(self.config.num_layers, self.config.hidden_size);
        if self.weights.len() != expected || self.ada_mask.len() != expected {
            return Err(Error::invalid(
                "weights",
                format!(
                    "expected {expected} parameters, got {} weights and {} mask entries",
                    self.weights.len(),
                    self.ada_mask.len()
                ),
            ));
        }
        Ok(())
    }
}

pub(crate) fn mask_runs(mask: &[bool]) -> Vec<[usize; 2]> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            runs.push([start, i - start]);
        } else {
            i += 1;
        }
    }
    runs
}

/// Randomly initialized network; weights uniform in `±1/sqrt(hidden)`.
pub fn build_model(config: &NetConfig, seed: u64) -> Result<WeightPartition> {
    config.validate()?;
    let layout = Layout::from_config(config);
    let bound = 1.0 / (config.hidden_size as f64).sqrt();
    let mut rng = rng::stream(seed, Purpose::Init, 0);
    let weights: Vec<f64> = (0..layout.total)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    let mut ada_mask = vec![false; layout.total];
    for l in 1..config.num_layers {
        ada_mask[layout.layer_range(l)].iter_mut().for_each(|m| *m = true);
    }
    ada_mask[layout.head_range()].iter_mut().for_each(|m| *m = true);
    Ok(WeightPartition {
        config: config.clone(),
        weights,
        ada_mask,
        seed,
    })
}

/// Mean Gaussian NLL over the target part of a mean-scaled window of
/// `context_length + prediction_length` values, teacher forced, no dropout.
pub fn nll_loss(weights: &WeightPartition, window: &[f64], context_length: usize) -> Result<f64> {
    check_window(weights, window, context_length)?;
    network::window_loss(&weights.weights, &weights.layout(), window, context_length, None, None)
}

/// [`nll_loss`] together with its gradient with respect to every weight.
pub fn nll_loss_and_grad(
    weights: &WeightPartition,
    window: &[f64],
    context_length: usize,
) -> Result<(f64, Vec<f64>)> {
    check_window(weights, window, context_length)?;
    let mut grad = vec![0.0; weights.weights.len()];
    let loss = network::window_loss(
        &weights.weights,
        &weights.layout(),
        window,
        context_length,
        None,
        Some((&mut grad, 0)),
    )?;
    Ok((loss, grad))
}

fn check_window(weights: &WeightPartition, window: &[f64], context_length: usize) -> Result<()> {
    weights.check()?;
    if context_length == 0 || window.len() <= context_length {
        return Err(Error::invalid(
            "window",
            format!("{} values cannot hold a context of {context_length} plus a target", window.len()),
        ));
    }
    Ok(())
}
