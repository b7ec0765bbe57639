use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use adasample::bayesopt::SchedulerConfig;
use adasample::forecaster::NetConfig;
use adasample::metrics::EvalReport;
use adasample::pipeline::{
    ablation_uniform, ada_forecast, adapt, bench, evaluate_backtest, pretrain, FinetuneConfig, HeldOutDataset, Method,
    RunArtifacts, RunConfig,
};
use adasample::sampling::{NegativeBinomial, TimeStepDistribution};
use adasample::synth::{generate, Case, ScenarioSpec, ShiftKind};
use adasample::Error;

fn tiny_run() -> RunConfig {
    RunConfig {
        context_length: 12,
        prediction_length: 6,
        net: NetConfig {
            num_layers: 2,
            hidden_size: 4,
            dropout: 0.1,
            learning_rate: 1e-2,
            epochs: 2,
            batches_per_epoch: 2,
            batch_size: 8,
        },
        finetune: FinetuneConfig {
            learning_rate: 1e-2,
            batches_per_epoch: 1,
            batch_size: 8,
        },
        scheduler: SchedulerConfig {
            random_init_count: 2,
            max_trials: Some(4),
            rungs: vec![1, 3],
            max_concurrency: 2,
            num_candidates: 50,
            ..SchedulerConfig::default()
        },
        num_forecast_samples: 16,
        num_repeat_runs: 2,
        seed: 7,
        ..RunConfig::default()
    }
}

fn tiny_data() -> HeldOutDataset {
    let spec = ScenarioSpec {
        case: Case::A,
        num_series: 3,
        length: 80,
        period: 12.0,
        shift_regions: vec![[60, 86]],
        shift_kind: ShiftKind::AdditiveLevel,
        shift_magnitude: 2.0,
        ..ScenarioSpec::stationary(1)
    };
    HeldOutDataset::new(generate(&spec, 12, 6).unwrap().0).unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn test_window_is_untouched_until_evaluation() {
    let held = tiny_data();
    let arts = ada_forecast(&held, &tiny_run()).unwrap();
    assert_eq!(held.future_reads(), 0);
    assert_eq!(arts.manifest.searches.len(), 2);
    let report = evaluate_backtest(&arts, &held).unwrap();
    assert_eq!(held.future_reads(), 1);
    assert!(report.ncrps.is_finite() && report.ncrps > 0.0);
    assert_eq!(report.num_steps, 3 * 6);
    let json = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), report);
}

#[test]
fn repeated_runs_write_identical_artifacts() {
    let held = tiny_data();
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        ada_forecast(&held, &tiny_run()).unwrap().write(&tmp.path().join(name)).unwrap();
    }
    let a = dir_bytes(&tmp.path().join("a"));
    assert!(a.contains_key("history_geometric.jsonl") && a.contains_key("pmf.csv") && a.contains_key("phi.json"));
    assert_eq!(a, dir_bytes(&tmp.path().join("b")));

    let read = RunArtifacts::read(&tmp.path().join("a")).unwrap();
    let fresh = ada_forecast(&held, &tiny_run()).unwrap();
    assert_eq!(read.adapted, fresh.adapted);
    assert_eq!(read.histories, fresh.histories);
    assert_eq!(read.manifest, fresh.manifest);
}

#[test]
fn zero_budget_falls_back_to_the_ablation() {
    let held = tiny_data();
    let mut run = tiny_run();
    let ablation = ablation_uniform(&held, &run).unwrap();
    assert!(ablation.histories.is_empty());
    run.scheduler.max_trials = Some(0);
    let ada = ada_forecast(&held, &run).unwrap();
    assert!(ada.histories.is_empty());
    assert_eq!(ada.adapted, ablation.adapted);
    assert_eq!(
        evaluate_backtest(&ada, &held).unwrap(),
        evaluate_backtest(&ablation, &held).unwrap()
    );
}

#[test]
fn point_mass_fine_tunes_on_the_newest_window() {
    let held = tiny_data();
    let run = RunConfig {
        fixed_phi: Some(TimeStepDistribution::geometric(1.0).unwrap()),
        ..tiny_run()
    };
    let arts = ada_forecast(&held, &run).unwrap();
    // adaptation series hold T - tau = 74 steps; windows are 18 long
    let newest = 74 - 18 + 1;
    assert!(!arts.sampled_starts.is_empty());
    assert!(arts.sampled_starts.iter().all(|s| s.start == newest));
    assert_eq!(arts.pmf.unwrap().probs()[0], 1.0);
}

#[test]
fn leakage_guard_rejects_contaminated_stages() {
    let held = tiny_data();
    let mut arts = ablation_uniform(&held, &tiny_run()).unwrap();
    arts.manifest.stages[0].unseen_tail = 2;
    match evaluate_backtest(&arts, &held) {
        Err(Error::Leakage { stage, index, training_end }) => {
            assert_eq!(stage, "pretrain");
            assert_eq!(training_end, 80);
            assert_eq!(index, 85);
        }
        other => panic!("expected leakage error, got {other:?}"),
    }
    assert_eq!(held.future_reads(), 0);
}

#[test]
fn stage_failures_name_the_stage() {
    let held = tiny_data();
    let run = RunConfig {
        fixed_phi: Some(TimeStepDistribution::NegativeBinomial(NegativeBinomial { r: 500.0, p: 1e-4 })),
        ..tiny_run()
    };
    let pre = pretrain(held.history(), &run.net, run.seed).unwrap();
    let err = adapt(&held, &pre, &run, Method::AdaForecast, Vec::new()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "finetune", .. }), "{err}");
    assert!(err.to_string().contains("degenerate"));
}

#[test]
fn bench_reports_every_method() {
    let mut run = tiny_run();
    run.context_length = 24;
    run.prediction_length = 24;
    run.scenario = Some(ScenarioSpec {
        num_series: 2,
        ..ScenarioSpec::scenario_b(0)
    });
    let tmp = tempfile::tempdir().unwrap();
    let report = bench(Case::B, 2, &run, Some(tmp.path())).unwrap();
    assert_eq!(report.seeds.len(), 2);
    assert_eq!(report.table.methods.len(), 3);
    assert_eq!(report.table.pairs.len(), 3);
    assert!(report.seeds.iter().all(|s| s.future_reads_before_eval == 0));
    for f in ["bench.json", "table.md", "pmf_seed0.csv", "series_seed1.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let series = fs::read_to_string(tmp.path().join("series_seed0.csv")).unwrap();
    assert!(series.starts_with("t,value,masked\n1,"));
    assert!(series.lines().nth(100).unwrap().ends_with(",true"));
}
