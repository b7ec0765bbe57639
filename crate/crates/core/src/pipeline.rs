//! End-to-end runs: pretraining, fine-tuning of the adaptive weights with a
//! learned window distribution, the uniform ablation and backtests.
//!
//! A series of length `T + tau` is split into history `z_{1:T}` and the test
//! window. Inside the history the last `tau` steps are the validation
//! channel used to score candidate distributions.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::bayesopt::{
    optimize_resume, read_history, write_history, Objective, SchedulerConfig, SearchSpace, TrialRecord,
};
use crate::error::{Error, Result};
use crate::forecaster::{
    build_model, forecast, load_checkpoint, save_checkpoint, train, NetConfig, SampledStart, Trainable, Trainer,
    WeightPartition,
};
use crate::metrics::{mean_std, ncrps, paired_t_test, EvalReport, QuantileGrid};
use crate::rng::{derive_seed, Purpose};
use crate::sampling::{DistributionSampler, Family, TimeStepDistribution, TruncatedIndexPmf};
use crate::synth::{generate, mass_on_mask, Case, ScenarioSpec, ShiftMask};
use crate::timeseries::{load_dataset, split_for_adaptation, Dataset, DatasetMeta, FileFormat};

/// Optimization settings for fine-tuning. The architecture and dropout come
/// from the pretrained model; the number of epochs is the top rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            learning_rate: 1e-3,
            batches_per_epoch: 10,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Series file (JSONL or CSV) holding history plus the test window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Synthetic scenario used when no data file is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    pub context_length: usize,
    pub prediction_length: usize,
    pub net: NetConfig,
    pub finetune: FinetuneConfig,
    pub scheduler: SchedulerConfig,
    pub families: Vec<Family>,
    /// Skips the search and fine-tunes with this distribution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_phi: Option<TimeStepDistribution>,
    pub quantiles: QuantileGrid,
    pub num_forecast_samples: usize,
    pub num_repeat_runs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            scenario: None,
            context_length: 24,
            prediction_length: 24,
            net: NetConfig::default(),
            finetune: FinetuneConfig::default(),
            scheduler: SchedulerConfig::default(),
            families: vec![Family::Geometric, Family::Mixnb2],
            fixed_phi: None,
            quantiles: QuantileGrid::default(),
            num_forecast_samples: 100,
            num_repeat_runs: 10,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let run: RunConfig = serde_json::from_str(&text)?;
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_length == 0 {
            return Err(Error::invalid("context_length", "must be positive"));
        }
        if self.prediction_length == 0 {
            return Err(Error::invalid("prediction_length", "must be positive"));
        }
        self.net.validate()?;
        self.finetune_net().validate()?;
        self.scheduler.validate().or_else(|e| if self.search_skipped() { Ok(()) } else { Err(e) })?;
        if self.num_repeat_runs == 0 {
            return Err(Error::invalid("num_repeat_runs", "must be at least 1"));
        }
        if self.num_forecast_samples == 0 {
            return Err(Error::invalid("num_forecast_samples", "must be positive"));
        }
        if self.families.is_empty() && !self.search_skipped() {
            return Err(Error::invalid("families", "no distribution family to search"));
        }
        if let Some(phi) = &self.fixed_phi {
            phi.validate()?;
        }
        if let Some(path) = &self.data {
            if !path.exists() {
                return Err(Error::invalid("data", format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn search_skipped(&self) -> bool {
        self.fixed_phi.is_some() || self.scheduler.max_trials == Some(0)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            context_length: self.context_length,
            prediction_length: self.prediction_length,
            frequency: "1".to_string(),
        }
    }

    /// Fine-tuning settings as a full network config.
    pub fn finetune_net(&self) -> NetConfig {
        NetConfig {
            learning_rate: self.finetune.learning_rate,
            batches_per_epoch: self.finetune.batches_per_epoch,
            batch_size: self.finetune.batch_size,
            epochs: self.scheduler.rungs.last().copied().unwrap_or(0) as usize,
            ..self.net.clone()
        }
    }

    /// Reads the data file or generates the scenario.
    pub fn dataset(&self) -> Result<(Dataset, Option<ShiftMask>)> {
        match (&self.data, &self.scenario) {
            (Some(path), _) => Ok((load_dataset(path, FileFormat::from_path(path), self.meta())?, None)),
            (None, Some(spec)) => {
                let (d, m) = generate(spec, self.context_length, self.prediction_length)?;
                Ok((d, Some(m)))
            }
            (None, None) => Err(Error::invalid("run config", "needs `data` or `scenario`")),
        }
    }
}

/// Full series with the final `tau` steps held out. The history is freely
/// readable; reads of the test window are counted.
#[derive(Debug)]
pub struct HeldOutDataset {
    history: Dataset,
    future: Vec<Vec<f64>>,
    future_reads: AtomicUsize,
}

impl HeldOutDataset {
    pub fn new(full: Dataset) -> Result<Self> {
        let tau = full.prediction_length;
        let history = full.drop_last(tau)?;
        history.check_adaptable()?;
        let future = full.series.iter().map(|s| s.values[s.len() - tau..].to_vec()).collect();
        Ok(HeldOutDataset {
            history,
            future,
            future_reads: AtomicUsize::new(0),
        })
    }

    /// `z_{1:T}` for every series.
    pub fn history(&self) -> &Dataset {
        &self.history
    }

    pub fn horizon(&self) -> usize {
        self.history.prediction_length
    }

    /// The test window `z_{T+1:T+tau}`. Every call is recorded.
    pub fn future(&self) -> &[Vec<f64>] {
        self.future_reads.fetch_add(1, Ordering::SeqCst);
        &self.future
    }

    pub fn future_reads(&self) -> usize {
        self.future_reads.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdaForecast,
    AblationUniform,
    PretrainOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::AdaForecast, Method::AblationUniform, Method::PretrainOnly];

    pub fn name(&self) -> &'static str {
        match self {
            Method::AdaForecast => "ada_forecast",
            Method::AblationUniform => "ablation_uniform",
            Method::PretrainOnly => "pretrain_only",
        }
    }
}

/// Data seen by one stage: every series minus its last `unseen_tail` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub unseen_tail: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    pub phi: TimeStepDistribution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub family: Family,
    pub best_trial: usize,
    pub best_config: Vec<f64>,
    pub best_loss: f64,
    pub num_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: Method,
    pub seed: u64,
    pub context_length: usize,
    pub prediction_length: usize,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    pub searches: Vec<SearchSummary>,
    pub pretrain_trace: Vec<f64>,
    pub finetune_trace: Vec<f64>,
    pub quantiles: QuantileGrid,
    pub num_forecast_samples: usize,
}

/// Everything a run produces; [`RunArtifacts::write`] lays it out on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub manifest: Manifest,
    pub pretrained: WeightPartition,
    pub adapted: WeightPartition,
    pub histories: Vec<(Family, Vec<TrialRecord>)>,
    /// Learned pmf over the first series' adaptation start range.
    pub pmf: Option<TruncatedIndexPmf>,
    /// Starts drawn by the final fine-tune (kept in memory only).
    pub sampled_starts: Vec<SampledStart>,
}

const PRETRAINED: &str = "pretrained.bin";
const ADAPTED: &str = "adapted.bin";
const MANIFEST: &str = "manifest.json";

fn history_file(family: Family) -> String {
    format!("history_{}.jsonl", family.name())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunArtifacts {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&dir.join(PRETRAINED), &self.pretrained)?;
        save_checkpoint(&dir.join(ADAPTED), &self.adapted)?;
        for (family, history) in &self.histories {
            write_history(history, &dir.join(history_file(*family)))?;
        }
        if let Some(sel) = &self.manifest.selection {
            write_json(&dir.join("phi.json"), sel)?;
        }
        if let Some(pmf) = &self.pmf {
            write_json(&dir.join("pmf.json"), pmf)?;
            write_pmf_csv(pmf, &dir.join("pmf.csv"))?;
        }
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut histories = Vec::new();
        for s in &manifest.searches {
            histories.push((s.family, read_history(&dir.join(history_file(s.family)))?));
        }
        let pmf_path = dir.join("pmf.json");
        let pmf = if pmf_path.exists() {
            let text = fs::read_to_string(&pmf_path).map_err(|e| Error::io(&pmf_path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        Ok(RunArtifacts {
            pretrained: load_checkpoint(&dir.join(PRETRAINED))?,
            adapted: load_checkpoint(&dir.join(ADAPTED))?,
            manifest,
            histories,
            pmf,
            sampled_starts: Vec::new(),
        })
    }
}

/// `(offset, probability)` rows.
pub fn write_pmf_csv(pmf: &TruncatedIndexPmf, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid("csv", e.to_string()))?;
    let fail = |e: csv::Error| Error::invalid("csv", e.to_string());
    w.write_record(["offset", "probability"]).map_err(fail)?;
    for (k, p) in pmf.probs().iter().enumerate() {
        w.write_record([k.to_string(), p.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(t, value, masked)` rows for one series.
pub fn write_series_csv(values: &[f64], mask: &[bool], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid("csv", e.to_string()))?;
    let fail = |e: csv::Error| Error::invalid("csv", e.to_string());
    w.write_record(["t", "value", "masked"]).map_err(fail)?;
    for (i, v) in values.iter().enumerate() {
        let masked = mask.get(i).copied().unwrap_or(false);
        w.write_record([(i + 1).to_string(), v.to_string(), masked.to_string()])
            .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Result of the first stage, shared by every method of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub weights: WeightPartition,
    pub loss_trace: Vec<f64>,
}

/// Trains every weight on the full history with uniform windows.
pub fn pretrain(history: &Dataset, net: &NetConfig, seed: u64) -> Result<Pretrained> {
    let run = || -> Result<Pretrained> {
        let init = build_model(net, derive_seed(seed, Purpose::Init, 0))?;
        let out = train(
            history,
            DistributionSampler::uniform(),
            init,
            Trainable::All,
            net,
            derive_seed(seed, Purpose::Pretrain, 0),
        )?;
        Ok(Pretrained {
            weights: out.weights,
            loss_trace: out.loss_trace,
        })
    };
    run().map_err(|e| e.in_stage("pretrain"))
}

/// One search trial: fine-tune the adaptive weights with the candidate
/// distribution and score the validation channel after each rung.
struct FinetuneObjective<'a> {
    train: &'a Dataset,
    labels: &'a [Vec<f64>],
    pretrained: &'a WeightPartition,
    family: Family,
    net: NetConfig,
    grid: &'a QuantileGrid,
    num_samples: usize,
    seed: u64,
}

impl<'a> Objective for FinetuneObjective<'a> {
    type State = Trainer<'a, DistributionSampler>;

    fn start(&self, trial_id: usize, config: &[f64]) -> Result<Self::State, String> {
        let build = || -> Result<Self::State> {
            let sampler = DistributionSampler::new(self.family.distribution(config)?)?;
            sampler.prepare(self.train.series.iter().map(|s| s.len() - self.train.window_length() + 1))?;
            Trainer::new(
                self.train,
                sampler,
                self.pretrained.clone(),
                Trainable::AdaOnly,
                &self.net,
                derive_seed(self.seed, Purpose::TrialFinetune, trial_id as u64),
            )
        };
        build().map_err(|e| e.to_string())
    }

    fn run_to(&self, state: &mut Self::State, resource: u32) -> Result<f64, String> {
        let mut eval = || -> Result<f64> {
            state.run_epochs(resource as usize - state.epochs_done())?;
            let seed = derive_seed(self.seed, Purpose::ValidationForecast, 0);
            let forecasts = forecast(self.train, state.weights(), self.num_samples, seed)?;
            Ok(ncrps(&forecasts, self.labels, self.grid)?.ncrps)
        };
        eval().map_err(|e| e.to_string())
    }
}

/// Histories from an earlier, interrupted search, by family.
pub type PriorHistories = Vec<(Family, Vec<TrialRecord>)>;

/// Stages two to four for one method, starting from pretrained weights.
pub fn adapt(
    held: &HeldOutDataset,
    pretrained: &Pretrained,
    run: &RunConfig,
    method: Method,
    prior: PriorHistories,
) -> Result<RunArtifacts> {
    run.validate()?;
    let tau = held.horizon();
    let history = held.history();
    if !run.net.same_architecture(&pretrained.weights.config) {
        return Err(Error::invalid("checkpoint", "architecture differs from the run config"));
    }
    let mut stages = vec![StageRecord {
        stage: "pretrain".into(),
        unseen_tail: tau,
    }];
    let (ada_train, labels) = split_for_adaptation(history).map_err(|e| e.in_stage("split"))?;
    let ft_net = run.finetune_net();

    let mut searches = Vec::new();
    let mut histories = Vec::new();
    let selection = match method {
        Method::PretrainOnly => None,
        Method::AblationUniform => Some(Selection {
            family: None,
            phi: TimeStepDistribution::Uniform,
            validation_loss: None,
        }),
        Method::AdaForecast if run.search_skipped() => Some(Selection {
            family: None,
            phi: run.fixed_phi.clone().unwrap_or(TimeStepDistribution::Uniform),
            validation_loss: None,
        }),
        Method::AdaForecast => {
            stages.push(StageRecord {
                stage: "search_finetune".into(),
                unseen_tail: 2 * tau,
            });
            stages.push(StageRecord {
                stage: "search_validation".into(),
                unseen_tail: tau,
            });
            let mut best: Option<Selection> = None;
            for (fi, family) in run.families.iter().enumerate() {
                let objective = FinetuneObjective {
                    train: &ada_train,
                    labels: &labels,
                    pretrained: &pretrained.weights,
                    family: *family,
                    net: ft_net.clone(),
                    grid: &run.quantiles,
                    num_samples: run.num_forecast_samples,
                    seed: derive_seed(run.seed, Purpose::TrialFinetune, fi as u64),
                };
                let earlier = prior
                    .iter()
                    .find(|(f, _)| f == family)
                    .map(|(_, h)| h.clone())
                    .unwrap_or_default();
                let out = optimize_resume(
                    &objective,
                    &SearchSpace::for_family(*family),
                    &run.scheduler,
                    derive_seed(run.seed, Purpose::Suggest, fi as u64),
                    earlier,
                );
                let out = match out {
                    Ok(out) => out,
                    Err(Error::NoIncumbent) => continue,
                    Err(e) => return Err(e.in_stage("search")),
                };
                searches.push(SearchSummary {
                    family: *family,
                    best_trial: out.best_trial,
                    best_config: out.best_config.clone(),
                    best_loss: out.best_loss,
                    num_trials: out.history.len(),
                });
                histories.push((*family, out.history));
                if best.as_ref().is_none_or(|b| out.best_loss < b.validation_loss.unwrap_or(f64::INFINITY)) {
                    best = Some(Selection {
                        family: Some(*family),
                        phi: family.distribution(&out.best_config)?,
                        validation_loss: Some(out.best_loss),
                    });
                }
            }
            Some(best.ok_or_else(|| Error::NoIncumbent.in_stage("search"))?)
        }
    };

    let first_support = ada_train.series[0].len() - ada_train.window_length() + 1;
    let (adapted, finetune_trace, sampled_starts, pmf) = match &selection {
        None => (pretrained.weights.clone(), Vec::new(), Vec::new(), None),
        Some(sel) => {
            stages.push(StageRecord {
                stage: "finetune".into(),
                unseen_tail: 2 * tau,
            });
            let fine = || -> Result<_> {
                let sampler = DistributionSampler::new(sel.phi.clone())?;
                let pmf = match sel.phi {
                    TimeStepDistribution::Uniform => TruncatedIndexPmf::uniform(first_support)?,
                    _ => sampler.pmf(first_support)?,
                };
                let mut trainer = Trainer::new(
                    &ada_train,
                    sampler,
                    pretrained.weights.clone(),
                    Trainable::AdaOnly,
                    &ft_net,
                    derive_seed(run.seed, Purpose::FinalFinetune, 0),
                )?
                .record_starts();
                trainer.run_epochs(ft_net.epochs)?;
                let out = trainer.finish();
                Ok((out.weights, out.loss_trace, out.sampled_starts.unwrap_or_default(), Some(pmf)))
            };
            fine().map_err(|e| e.in_stage("finetune"))?
        }
    };

    Ok(RunArtifacts {
        manifest: Manifest {
            method,
            seed: run.seed,
            context_length: run.context_length,
            prediction_length: run.prediction_length,
            stages,
            selection,
            searches,
            pretrain_trace: pretrained.loss_trace.clone(),
            finetune_trace,
            quantiles: run.quantiles.clone(),
            num_forecast_samples: run.num_forecast_samples,
        },
        pretrained: pretrained.weights.clone(),
        adapted,
        histories,
        pmf,
        sampled_starts,
    })
}

fn full_run(held: &HeldOutDataset, run: &RunConfig, method: Method) -> Result<RunArtifacts> {
    run.validate()?;
    let pre = pretrain(held.history(), &run.net, run.seed)?;
    adapt(held, &pre, run, method, Vec::new())
}

/// Pretrain, search both families, fine-tune with the winner.
pub fn ada_forecast(held: &HeldOutDataset, run: &RunConfig) -> Result<RunArtifacts> {
    full_run(held, run, Method::AdaForecast)
}

/// Same pipeline with uniform windows and no search.
pub fn ablation_uniform(held: &HeldOutDataset, run: &RunConfig) -> Result<RunArtifacts> {
    full_run(held, run, Method::AblationUniform)
}

/// Forecasts the test window with the adapted weights and scores it. Fails
/// if any recorded stage saw part of the test window.
pub fn evaluate_backtest(artifacts: &RunArtifacts, held: &HeldOutDataset) -> Result<EvalReport> {
    let tau = held.horizon();
    let m = &artifacts.manifest;
    let history_len = held.history().series[0].len();
    if let Some(s) = m.stages.iter().find(|s| s.unseen_tail < tau) {
        return Err(Error::Leakage {
            stage: s.stage.clone(),
            index: history_len + tau - s.unseen_tail + 1,
            training_end: history_len,
        });
    }
    if m.prediction_length != tau || m.context_length != held.history().context_length {
        return Err(Error::invalid("artifacts", "window geometry differs from the dataset"));
    }
    let seed = derive_seed(m.seed, Purpose::TestForecast, 0);
    let forecasts = forecast(held.history(), &artifacts.adapted, m.num_forecast_samples, seed)?;
    ncrps(&forecasts, held.future(), &m.quantiles)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub p_value: f64,
}

/// Mean ± std per method and paired t-test p-values per method pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<MethodSummary>,
    pub pairs: Vec<PairTest>,
}

pub fn compare(scores: &[(String, Vec<f64>)]) -> Result<ComparisonTable> {
    let methods = scores
        .iter()
        .map(|(name, s)| {
            let (mean, std) = mean_std(s);
            MethodSummary {
                method: name.clone(),
                scores: s.clone(),
                mean,
                std,
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            if scores[i].1.len() >= 2 {
                pairs.push(PairTest {
                    a: scores[i].0.clone(),
                    b: scores[j].0.clone(),
                    p_value: paired_t_test(&scores[i].1, &scores[j].1)?,
                });
            }
        }
    }
    Ok(ComparisonTable { methods, pairs })
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| method | nCRPS mean | std | runs |")?;
        writeln!(f, "|---|---|---|---|")?;
        for m in &self.methods {
            writeln!(f, "| {} | {:.4} | {:.4} | {} |", m.method, m.mean, m.std, m.scores.len())?;
        }
        if !self.pairs.is_empty() {
            writeln!(f)?;
            writeln!(f, "| pair | paired t-test p |")?;
            writeln!(f, "|---|---|")?;
            for p in &self.pairs {
                writeln!(f, "| {} vs {} | {:.4} |", p.a, p.b, p.p_value)?;
            }
        }
        Ok(())
    }
}

/// Test nCRPS of each method per repeat run. Repeat `k` uses master seed
/// `derive_seed(run.seed, Repeat, k)`; methods share the pretrained model.
pub fn repeat_runs(held: &HeldOutDataset, run: &RunConfig) -> Result<ComparisonTable> {
    run.validate()?;
    let mut scores: Vec<(String, Vec<f64>)> = Method::ALL.iter().map(|m| (m.name().to_string(), Vec::new())).collect();
    for k in 0..run.num_repeat_runs {
        let r = RunConfig {
            seed: derive_seed(run.seed, Purpose::Repeat, k as u64),
            ..run.clone()
        };
        let pre = pretrain(held.history(), &r.net, r.seed)?;
        let mut all = Vec::new();
        for m in Method::ALL {
            all.push(adapt(held, &pre, &r, m, Vec::new())?);
        }
        for (slot, art) in scores.iter_mut().zip(&all) {
            slot.1.push(evaluate_backtest(art, held)?.ncrps);
        }
    }
    compare(&scores)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSeed {
    pub seed: u64,
    pub ada_forecast: f64,
    pub ablation_uniform: f64,
    pub pretrain_only: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    /// Probability that a learned-pmf window overlaps a shift.
    pub mass_learned: f64,
    pub mass_uniform: f64,
    pub future_reads_before_eval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: Case,
    pub seeds: Vec<BenchSeed>,
    pub table: ComparisonTable,
}

/// Default scenario for a case.
pub fn scenario(case: Case, seed: u64) -> ScenarioSpec {
    match case {
        Case::A => ScenarioSpec::scenario_a(seed),
        Case::B => ScenarioSpec::scenario_b(seed),
        Case::C => ScenarioSpec::scenario_c(seed),
        Case::Unshifted => ScenarioSpec::stationary(seed),
    }
}

/// Runs the three methods on `seeds` generated fixtures of `case`. Seed `s`
/// generates the data with seed `s` and runs with master seed
/// `derive_seed(run.seed, Repeat, s)`. With `out`, writes the report, the
/// table and plot data per seed.
pub fn bench(case: Case, seeds: usize, run: &RunConfig, out: Option<&Path>) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for s in 0..seeds as u64 {
        let spec = ScenarioSpec {
            num_series: run.scenario.as_ref().map_or(20, |sc| sc.num_series),
            ..scenario(case, s)
        };
        let (full, mask) = generate(&spec, run.context_length, run.prediction_length)?;
        let held = HeldOutDataset::new(full)?;
        let r = RunConfig {
            seed: derive_seed(run.seed, Purpose::Repeat, s),
            ..run.clone()
        };
        let pre = pretrain(held.history(), &r.net, r.seed)?;
        let arts: Vec<RunArtifacts> = Method::ALL
            .iter()
            .map(|m| adapt(&held, &pre, &r, *m, Vec::new()))
            .collect::<Result<_>>()?;
        let reads = held.future_reads();
        let scores: Vec<f64> = arts
            .iter()
            .map(|a| evaluate_backtest(a, &held).map(|e| e.ncrps))
            .collect::<Result<_>>()?;

        let train_len = held.history().series[0].len() - run.prediction_length;
        let range = crate::timeseries::valid_start_range(train_len, run.context_length, run.prediction_length)?;
        let window = run.context_length + run.prediction_length;
        let learned = arts[0].pmf.clone().expect("ada_forecast fine-tunes");
        let mass_learned = mass_on_mask(&learned, mask.series(0), range, window)?;
        let mass_uniform = mass_on_mask(&TruncatedIndexPmf::uniform(range.len())?, mask.series(0), range, window)?;

        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_pmf_csv(&learned, &dir.join(format!("pmf_seed{s}.csv")))?;
            write_series_csv(
                &held.history().series[0].values,
                mask.series(0),
                &dir.join(format!("series_seed{s}.csv")),
            )?;
        }
        rows.push(BenchSeed {
            seed: s,
            ada_forecast: scores[0],
            ablation_uniform: scores[1],
            pretrain_only: scores[2],
            selection: arts[0].manifest.selection.clone(),
            mass_learned,
            mass_uniform,
            future_reads_before_eval: reads,
        });
    }
    let table = compare(&[
        ("ada_forecast".into(), rows.iter().map(|r| r.ada_forecast).collect()),
        ("ablation_uniform".into(), rows.iter().map(|r| r.ablation_uniform).collect()),
        ("pretrain_only".into(), rows.iter().map(|r| r.pretrain_only).collect()),
    ])?;
    let report = BenchReport {
        case,
        seeds: rows,
        table,
    };
    if let Some(dir) = out {
        write_json(&dir.join("bench.json"), &report)?;
        fs::write(dir.join("table.md"), report.table.to_string()).map_err(|e| Error::io(dir.join("table.md"), e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_methods_give_p_one() {
        let t = compare(&[("a".into(), vec![0.1, 0.2, 0.3]), ("b".into(), vec![0.1, 0.2, 0.3])]).unwrap();
        assert_eq!(t.pairs[0].p_value, 1.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<ComparisonTable>(&json).unwrap(), t);
    }

    #[test]
    fn run_config_defaults() {
        let r = RunConfig::default();
        assert_eq!(r.num_repeat_runs, 10);
        assert_eq!(r.finetune_net().epochs, 100);
        let bad = RunConfig {
            num_repeat_runs: 0,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
