//! Command-line surface. Exit codes: 0 on success, 1 for invalid input,
//! 2 for failures while computing.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bayesopt::{read_history, SchedulerConfig};
use crate::error::{Error, Result};
use crate::forecaster::{load_checkpoint, save_checkpoint};
use crate::pipeline::{adapt, bench, evaluate_backtest, pretrain, HeldOutDataset, Method, Pretrained, RunArtifacts, RunConfig};
use crate::synth::{generate, Case, ScenarioSpec};
use crate::timeseries::{load_dataset, save_jsonl, FileFormat};

#[derive(Debug, Parser)]
#[command(name = "adasample", version, about = "Adaptive window sampling for forecaster fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    A,
    B,
    C,
    None,
}

impl From<ScenarioArg> for Case {
    fn from(s: ScenarioArg) -> Case {
        match s {
            ScenarioArg::A => Case::A,
            ScenarioArg::B => Case::B,
            ScenarioArg::C => Case::C,
            ScenarioArg::None => Case::Unshifted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ada,
    Ablation,
    PretrainOnly,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset, its shift mask and plot data.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        context_length: usize,
        #[arg(long, default_value_t = 24)]
        prediction_length: usize,
    },
    /// Train every weight on the history (the last horizon is held out).
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search the window distribution and fine-tune the adaptive weights.
    Adapt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sched: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run config for everything but the scheduler.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Ada)]
        method: MethodArg,
    },
    /// Score adapted weights on the held-out window.
    Evaluate {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare ada_forecast, the uniform ablation and pretrain-only.
    Bench {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_run(path: Option<&Path>) -> Result<RunConfig> {
    let run = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    run.validate()?;
    Ok(run)
}

fn held_out(data: &Path, run: &RunConfig) -> Result<HeldOutDataset> {
    HeldOutDataset::new(load_dataset(data, FileFormat::from_path(data), run.meta())?)
}

/// Runs one command and returns its report text.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate {
            spec,
            out,
            context_length,
            prediction_length,
        } => {
            let spec = ScenarioSpec::load(&spec)?;
            let (data, mask) = generate(&spec, context_length, prediction_length)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            save_jsonl(&data.series, &out.join("data.jsonl"))?;
            mask.write_jsonl(&out.join("mask.jsonl"))?;
            for (s, m) in data.series.iter().zip(&mask.masks) {
                crate::pipeline::write_series_csv(&s.values, m, &out.join(format!("{}.csv", s.id)))?;
            }
            Ok(format!("wrote {} series to {}", data.series.len(), out.display()))
        }
        Command::Pretrain { data, config, out } => {
            let run = load_run(Some(&config))?;
            let held = held_out(&data, &run)?;
            let pre = pretrain(held.history(), &run.net, run.seed)?;
            save_checkpoint(&out, &pre.weights)?;
            let last = pre.loss_trace.last().copied().unwrap_or(f64::NAN);
            Ok(format!("pretrained {} parameters, final loss {last:.4}", pre.weights.param_count()))
        }
        Command::Adapt {
            data,
            ckpt,
            sched,
            out,
            config,
            method,
        } => {
            let mut run = load_run(config.as_deref())?;
            run.scheduler = read_json::<SchedulerConfig>(&sched)?;
            run.validate()?;
            let held = held_out(&data, &run)?;
            let weights = load_checkpoint(&ckpt)?;
            run.net.num_layers = weights.config.num_layers;
            run.net.hidden_size = weights.config.hidden_size;
            let pre = Pretrained {
                weights,
                loss_trace: Vec::new(),
            };
            let method = match method {
                MethodArg::Ada => Method::AdaForecast,
                MethodArg::Ablation => Method::AblationUniform,
                MethodArg::PretrainOnly => Method::PretrainOnly,
            };
            let mut prior = Vec::new();
            for family in &run.families {
                let path = out.join(format!("history_{}.jsonl", family.name()));
                if path.exists() {
                    prior.push((*family, read_history(&path)?));
                }
            }
            let artifacts = adapt(&held, &pre, &run, method, prior)?;
            artifacts.write(&out)?;
            Ok(match &artifacts.manifest.selection {
                Some(sel) => format!("selected {}", serde_json::to_string(&sel.phi)?),
                None => "kept pretrained weights".to_string(),
            })
        }
        Command::Evaluate { artifacts, data } => {
            let arts = RunArtifacts::read(&artifacts)?;
            let run = RunConfig {
                context_length: arts.manifest.context_length,
                prediction_length: arts.manifest.prediction_length,
                ..RunConfig::default()
            };
            let held = held_out(&data, &run)?;
            let report = evaluate_backtest(&arts, &held)?;
            let text = serde_json::to_string_pretty(&report)?;
            fs::write(artifacts.join("eval.json"), text.clone() + "\n").map_err(|e| Error::io(&artifacts, e))?;
            Ok(text)
        }
        Command::Bench {
            scenario,
            seeds,
            config,
            out,
        } => {
            if seeds == 0 {
                return Err(Error::invalid("seeds", "must be positive"));
            }
            let run = load_run(config.as_deref())?;
            let report = bench(scenario.into(), seeds, &run, Some(&out))?;
            Ok(report.table.to_string())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            println!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
