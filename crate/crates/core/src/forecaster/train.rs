use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{self, DropoutMasks, Layout};
use super::{NetConfig, WeightPartition};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::sampling::WindowSampler;
use crate::timeseries::{scale_of, Dataset, StartRange};

const MAX_GRAD_NORM: f64 = 10.0;
const MAX_MONITOR_SERIES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    All,
    AdaOnly,
}

/// One training-window draw, for sampler audits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledStart {
    pub series: usize,
    pub start: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: WeightPartition,
    /// Monitor loss after every epoch: mean NLL of the most recent window of
    /// each series, without dropout.
    pub loss_trace: Vec<f64>,
    pub sampled_starts: Option<Vec<SampledStart>>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64], mask: &[bool], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..w.len() {
            if !mask[i] {
                continue;
            }
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            w[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Incremental trainer: epochs can be run in several installments, which
/// is how the scheduler resumes a trial at the next rung.
pub struct Trainer<'a, S: WindowSampler> {
    dataset: &'a Dataset,
    sampler: S,
    partition: WeightPartition,
    config: NetConfig,
    layout: Layout,
    update_mask: Vec<bool>,
    min_layer: usize,
    ranges: Vec<StartRange>,
    adam: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
    loss_trace: Vec<f64>,
    starts: Option<Vec<SampledStart>>,
}

impl<'a, S: WindowSampler> Trainer<'a, S> {
    /// `config` supplies the optimization settings; its architecture must
    /// match `init`.
    pub fn new(
        dataset: &'a Dataset,
        sampler: S,
        init: WeightPartition,
        trainable: Trainable,
        config: &NetConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        init.check()?;
        if !config.same_architecture(&init.config) {
            return Err(Error::invalid("config", "architecture differs from the initial weights"));
        }
        let ranges = dataset
            .series
            .iter()
            .map(|s| s.valid_starts(dataset.context_length, dataset.prediction_length))
            .collect::<Result<Vec<_>>>()?;
        let layout = init.layout();
        let (update_mask, min_layer) = match trainable {
            Trainable::All => (vec![true; init.weights.len()], 0),
            Trainable::AdaOnly => {
                let first = (0..layout.layers.len())
                    .find(|&l| init.ada_mask[layout.layer_range(l)].iter().any(|m| *m))
                    .unwrap_or(layout.layers.len());
                (init.ada_mask.clone(), first)
            }
        };
        let n = init.weights.len();
        Ok(Trainer {
            dataset,
            sampler,
            partition: init,
            config: config.clone(),
            layout,
            update_mask,
            min_layer,
            ranges,
            adam: Adam::new(n),
            rng: rng::stream(seed, Purpose::Training, 0),
            epoch: 0,
            loss_trace: Vec::new(),
            starts: None,
        })
    }

    /// Keep every sampled `(series, start)` pair.
    pub fn record_starts(mut self) -> Self {
        self.starts = Some(Vec::new());
        self
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn weights(&self) -> &WeightPartition {
        &self.partition
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub fn run_epochs(&mut self, epochs: usize) -> Result<()> {
        for _ in 0..epochs {
            for batch in 0..self.config.batches_per_epoch {
                self.step(batch)?;
            }
            let monitor = self.monitor_loss()?;
            self.loss_trace.push(monitor);
            self.epoch += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            weights: self.partition,
            loss_trace: self.loss_trace,
            sampled_starts: self.starts,
        }
    }

    fn step(&mut self, batch: usize) -> Result<()> {
        let ds = self.dataset;
        let mut jobs = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let series = self.rng.random_range(0..ds.len());
            let start = self.sampler.sample_start(self.ranges[series], &mut self.rng)?;
            if let Some(log) = &mut self.starts {
                log.push(SampledStart { series, start });
            }
            jobs.push((series, start, self.rng.random::<u64>()));
        }

        let params = &self.partition.weights;
        let layout = &self.layout;
        let context = ds.context_length;
        let window_len = ds.window_length();
        let dropout = self.config.dropout;
        let min_layer = self.min_layer;
        let results: Vec<Result<(f64, Vec<f64>)>> = jobs
            .par_iter()
            .map(|&(series, start, seed)| {
                let raw = ds.series[series].window(start, window_len);
                let scale = scale_of(&raw[..context]);
                let window: Vec<f64> = raw.iter().map(|v| v / scale).collect();
                let masks = dropout_masks(layout, window_len - 1, dropout, seed);
                let mut grad = vec![0.0; params.len()];
                let loss = network::window_loss(
                    params,
                    layout,
                    &window,
                    context,
                    masks.as_deref().map(|scales| DropoutMasks { scales }),
                    Some((&mut grad, min_layer)),
                )?;
                Ok((loss, grad))
            })
            .collect();

        let mut total = vec![0.0; params.len()];
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r.map_err(|_| Error::Diverged {
                epoch: self.epoch,
                batch,
            })?;
            loss += l;
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += gi;
            }
        }
        let inv = 1.0 / self.config.batch_size as f64;
        loss *= inv;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                batch,
            });
        }
        let mut norm = 0.0;
        for (g, m) in total.iter_mut().zip(&self.update_mask) {
            *g *= inv;
            if *m {
                norm += *g * *g;
            }
        }
        let norm = norm.sqrt();
        if !norm.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                batch,
            });
        }
        if norm > MAX_GRAD_NORM {
            let s = MAX_GRAD_NORM / norm;
            total.iter_mut().for_each(|g| *g *= s);
        }
        self.adam.step(
            &mut self.partition.weights,
            &total,
            &self.update_mask,
            self.config.learning_rate,
        );
        Ok(())
    }

    fn monitor_loss(&self) -> Result<f64> {
        let ds = self.dataset;
        let context = ds.context_length;
        let n = ds.len().min(MAX_MONITOR_SERIES);
        let mut total = 0.0;
        for (series, range) in self.ranges.iter().enumerate().take(n) {
            let raw = ds.series[series].window(range.last, ds.window_length());
            let scale = scale_of(&raw[..context]);
            let window: Vec<f64> = raw.iter().map(|v| v / scale).collect();
            total += network::window_loss(&self.partition.weights, &self.layout, &window, context, None, None)
                .map_err(|_| Error::Diverged {
                    epoch: self.epoch,
                    batch: self.config.batches_per_epoch,
                })?;
        }
        Ok(total / n as f64)
    }
}

fn dropout_masks(layout: &Layout, steps: usize, p: f64, seed: u64) -> Option<Vec<f64>> {
    if p <= 0.0 || layout.layers.len() < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    let n = (layout.layers.len() - 1) * steps * layout.hidden;
    Some(
        (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

/// Runs `config.epochs` epochs of `config.batches_per_epoch` Adam steps.
pub fn train<S: WindowSampler>(
    dataset: &Dataset,
    sampler: S,
    init: WeightPartition,
    trainable: Trainable,
    config: &NetConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, sampler, init, trainable, config, seed)?;
    trainer.run_epochs(config.epochs)?;
    Ok(trainer.finish())
}
