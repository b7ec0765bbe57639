//! Asynchronous successive-halving scheduler driven by GP suggestions.
//!
//! Concurrency is simulated in virtual time: a job advancing a trial from
//! resource `a` to `b` occupies a worker for `b - a` time units. Reports are
//! handled in (finish time, trial id) order, so a run is fully reproducible
//! while pending jobs still evaluate in parallel.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::asha::{Decision, RungBook};
use super::gp::{expected_improvement, NoiseModel, Surrogate};
use super::space::SearchSpace;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Trials drawn uniformly before the surrogate takes over.
    pub random_init_count: usize,
    /// Stop launching once this many trials reached the top rung.
    pub max_completed_trials: usize,
    /// Optional cap on the number of trials launched.
    pub max_trials: Option<usize>,
    /// Cumulative resource (epochs) at each rung, ascending.
    pub rungs: Vec<u32>,
    pub reduction_factor: usize,
    pub max_concurrency: usize,
    /// Random candidates scored by expected improvement per suggestion.
    pub num_candidates: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            random_init_count: 44,
            max_completed_trials: 200,
            max_trials: None,
            rungs: vec![11, 33, 100],
            reduction_factor: 3,
            max_concurrency: 4,
            num_candidates: 1000,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rungs.is_empty() || self.rungs[0] == 0 || self.rungs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("scheduler", "rungs must be positive and strictly increasing"));
        }
        if self.reduction_factor < 2 {
            return Err(Error::invalid("scheduler", "reduction_factor must be at least 2"));
        }
        if self.max_concurrency == 0 || self.num_candidates == 0 {
            return Err(Error::invalid("scheduler", "max_concurrency and num_candidates must be positive"));
        }
        if self.max_completed_trials == 0 || self.max_trials == Some(0) {
            return Err(Error::invalid("scheduler", "trial budget must be positive"));
        }
        Ok(())
    }

    pub fn top_resource(&self) -> u32 {
        *self.rungs.last().expect("validated rungs")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Stopped,
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungResult {
    pub resource: u32,
    /// `None` when the evaluation failed.
    pub loss: Option<f64>,
    /// Global arrival order of reports.
    pub seq: u64,
    /// Halving decision; absent at the top rung.
    pub decision: Option<Decision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub config: Vec<f64>,
    pub rung_results: Vec<RungResult>,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    /// Loss at the top rung for completed trials.
    pub fn final_loss(&self, top: u32) -> Option<f64> {
        if self.status != TrialStatus::Completed {
            return None;
        }
        self.rung_results.iter().find(|r| r.resource == top).and_then(|r| r.loss)
    }
}

/// A resumable objective: `start` builds per-trial state, `run_to` advances
/// it to a cumulative resource and returns the loss there.
pub trait Objective: Sync {
    type State: Send;
    fn start(&self, trial_id: usize, config: &[f64]) -> Result<Self::State, String>;
    fn run_to(&self, state: &mut Self::State, resource: u32) -> Result<f64, String>;
}

/// Wraps a stateless `f(config, resource)`.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64], u32) -> f64 + Sync,
{
    type State = Vec<f64>;

    fn start(&self, _trial_id: usize, config: &[f64]) -> Result<Vec<f64>, String> {
        Ok(config.to_vec())
    }

    fn run_to(&self, state: &mut Vec<f64>, resource: u32) -> Result<f64, String> {
        let loss = (self.0)(state, resource);
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(format!("non-finite loss {loss}"))
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub best_trial: usize,
    pub best_config: Vec<f64>,
    pub best_loss: f64,
    pub history: Vec<TrialRecord>,
}

/// Best completed trial; ties go to the lower trial id.
pub fn incumbent(history: &[TrialRecord], top: u32) -> Option<&TrialRecord> {
    history
        .iter()
        .filter_map(|t| t.final_loss(top).map(|l| (l, t)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.trial_id.cmp(&b.1.trial_id)))
        .map(|(_, t)| t)
}

/// Next configuration to try. Uniform while fewer than
/// `random_init_count` trials were launched (or nothing reached the top
/// rung), otherwise the argmax of expected improvement over random
/// candidates under a GP fit to top-rung losses.
pub fn suggest(space: &SearchSpace, history: &[TrialRecord], config: &SchedulerConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let top = config.top_resource();
    let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = history
        .iter()
        .filter_map(|t| t.final_loss(top).map(|l| (space.to_unit(&t.config), l)))
        .unzip();
    if history.len() < config.random_init_count || xs.is_empty() {
        return space.sample(rng);
    }
    let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let gp = match Surrogate::fit(xs, &ys, NoiseModel::Fitted) {
        Ok(gp) => gp,
        Err(_) => return space.sample(rng),
    };
    let mut chosen = Vec::new();
    let mut chosen_ei = f64::NEG_INFINITY;
    for _ in 0..config.num_candidates {
        let u: Vec<f64> = (0..space.dim()).map(|_| rng.random::<f64>()).collect();
        let (mean, var) = gp.predict(&u);
        let ei = expected_improvement(mean, var.sqrt(), best);
        if ei > chosen_ei {
            chosen_ei = ei;
            chosen = u;
        }
    }
    space.from_unit(&chosen)
}

struct Job<S> {
    trial_id: usize,
    rung: usize,
    finish: u64,
    state: Option<S>,
    result: Option<Result<f64, String>>,
}

pub fn optimize<O: Objective>(
    objective: &O,
    space: &SearchSpace,
    config: &SchedulerConfig,
    seed: u64,
) -> Result<OptimizeOutcome> {
    optimize_resume(objective, space, config, seed, Vec::new())
}

/// Continues from a saved history. Trials that were still running are
/// restarted from scratch toward their next rung.
pub fn optimize_resume<O: Objective>(
    objective: &O,
    space: &SearchSpace,
    config: &SchedulerConfig,
    seed: u64,
    mut history: Vec<TrialRecord>,
) -> Result<OptimizeOutcome> {
    config.validate()?;
    space.validate()?;
    for (i, t) in history.iter().enumerate() {
        if t.trial_id != i || t.config.len() != space.dim() {
            return Err(Error::invalid("trial history", format!("record {i} does not fit this search")));
        }
    }
    let rungs = &config.rungs;
    let rung_of = |resource: u32| rungs.iter().position(|r| *r == resource);

    let mut book = RungBook::new(rungs.len(), config.reduction_factor);
    let mut reports: Vec<(u64, usize, usize, Option<f64>)> = Vec::new();
    for t in &history {
        for r in &t.rung_results {
            let rung = rung_of(r.resource)
                .ok_or_else(|| Error::invalid("trial history", format!("resource {} is not a rung", r.resource)))?;
            reports.push((r.seq, t.trial_id, rung, r.loss));
        }
    }
    reports.sort_by_key(|r| r.0);
    for &(_, id, rung, loss) in &reports {
        book.record(id, rung, loss);
    }
    let mut seq = reports.last().map_or(0, |r| r.0 + 1);

    let mut now = 0u64;
    let mut running: Vec<Job<O::State>> = Vec::new();
    for t in &history {
        if t.status == TrialStatus::Running {
            let rung = t.rung_results.len();
            if rung >= rungs.len() {
                return Err(Error::invalid("trial history", format!("trial {} ran past the top rung", t.trial_id)));
            }
            running.push(Job {
                trial_id: t.trial_id,
                rung,
                finish: rungs[rung] as u64,
                state: None,
                result: None,
            });
        }
    }
    let mut completed = history.iter().filter(|t| t.status == TrialStatus::Completed).count();
    let max_trials = config.max_trials.unwrap_or(usize::MAX);

    loop {
        while running.len() < config.max_concurrency
            && history.len() < max_trials
            && completed < config.max_completed_trials
        {
            let trial_id = history.len();
            let mut rng = rng::stream(seed, Purpose::Suggest, trial_id as u64);
            let trial_config = suggest(space, &history, config, &mut rng);
            history.push(TrialRecord {
                trial_id,
                config: trial_config,
                rung_results: Vec::new(),
                status: TrialStatus::Running,
                error: None,
            });
            running.push(Job {
                trial_id,
                rung: 0,
                finish: now + rungs[0] as u64,
                state: None,
                result: None,
            });
        }
        let Some(next) = (0..running.len()).min_by_key(|&i| (running[i].finish, running[i].trial_id)) else {
            break;
        };
        if running[next].result.is_none() {
            let hist = &history;
            running.par_iter_mut().filter(|j| j.result.is_none()).for_each(|job| {
                job.result = Some(advance(objective, job, &hist[job.trial_id].config, rungs[job.rung]));
            });
        }
        let mut job = running.swap_remove(next);
        now = job.finish;
        let record = &mut history[job.trial_id];
        let resource = rungs[job.rung];
        match job.result.take().expect("evaluated above") {
            Err(message) => {
                book.record(job.trial_id, job.rung, None);
                record.rung_results.push(RungResult {
                    resource,
                    loss: None,
                    seq,
                    decision: Some(Decision::Stop),
                });
                record.status = TrialStatus::Failed;
                record.error = Some(message);
            }
            Ok(loss) => {
                let decision = book.record(job.trial_id, job.rung, Some(loss));
                let top = job.rung + 1 == rungs.len();
                record.rung_results.push(RungResult {
                    resource,
                    loss: Some(loss),
                    seq,
                    decision: (!top).then_some(decision),
                });
                if top {
                    record.status = TrialStatus::Completed;
                    completed += 1;
                } else if decision == Decision::Stop {
                    record.status = TrialStatus::Stopped;
                } else {
                    job.rung += 1;
                    job.finish = now + (rungs[job.rung] - resource) as u64;
                    running.push(job);
                }
            }
        }
        seq += 1;
    }

    let best = incumbent(&history, config.top_resource()).ok_or(Error::NoIncumbent)?;
    Ok(OptimizeOutcome {
        best_trial: best.trial_id,
        best_config: best.config.clone(),
        best_loss: best.final_loss(config.top_resource()).expect("completed trial"),
        history,
    })
}

fn advance<O: Objective>(objective: &O, job: &mut Job<O::State>, config: &[f64], resource: u32) -> Result<f64, String> {
    if job.state.is_none() {
        job.state = Some(objective.start(job.trial_id, config)?);
    }
    let loss = objective.run_to(job.state.as_mut().expect("started"), resource)?;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(format!("non-finite loss {loss}"))
    }
}

/// All rung reports in arrival order, as `(trial_id, rung index, loss)`.
pub fn reports_in_order(history: &[TrialRecord], rungs: &[u32]) -> Vec<super::asha::RungReport> {
    let mut all: Vec<(u64, super::asha::RungReport)> = history
        .iter()
        .flat_map(|t| {
            t.rung_results.iter().map(move |r| {
                (
                    r.seq,
                    super::asha::RungReport {
                        trial_id: t.trial_id,
                        rung: rungs.iter().position(|x| *x == r.resource).unwrap_or(usize::MAX),
                        loss: r.loss,
                    },
                )
            })
        })
        .collect();
    all.sort_by_key(|r| r.0);
    all.into_iter().map(|r| r.1).collect()
}

pub fn write_history(history: &[TrialRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for t in history {
        serde_json::to_writer(&mut out, t)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut history = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        history.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(history)
}
