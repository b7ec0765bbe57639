//! The full method on one scenario: pretrain, search the window
//! distribution, fine-tune, then score the held-out horizon once.
//!
//!     cargo run --release --example ada_forecast [out-dir]

use adasample::bayesopt::SchedulerConfig;
use adasample::forecaster::NetConfig;
use adasample::pipeline::{ablation_uniform, ada_forecast, evaluate_backtest, FinetuneConfig, HeldOutDataset, RunConfig};
use adasample::synth::{generate, ScenarioSpec};

fn main() -> adasample::Result<()> {
    let run = RunConfig {
        net: NetConfig {
            hidden_size: 16,
            learning_rate: 1e-2,
            epochs: 30,
            batches_per_epoch: 10,
            ..NetConfig::default()
        },
        finetune: FinetuneConfig {
            learning_rate: 3e-3,
            batches_per_epoch: 2,
            batch_size: 32,
        },
        scheduler: SchedulerConfig {
            random_init_count: 8,
            max_trials: Some(24),
            ..SchedulerConfig::default()
        },
        ..RunConfig::default()
    };
    let (full, _) = generate(&ScenarioSpec::scenario_a(0), run.context_length, run.prediction_length)?;
    let held = HeldOutDataset::new(full)?;

    let ada = ada_forecast(&held, &run)?;
    let ablation = ablation_uniform(&held, &run)?;
    assert_eq!(held.future_reads(), 0);

    if let Some(sel) = &ada.manifest.selection {
        println!("selected {:?}", sel.phi);
        if let Some(loss) = sel.validation_loss {
            println!("  validation loss {loss:.4}");
        }
    }
    for s in &ada.manifest.searches {
        println!("  {} search: {} trials", s.family.name(), s.num_trials);
    }
    if let Some(dir) = std::env::args().nth(1) {
        ada.write(dir.as_ref())?;
        println!("artifacts in {dir}");
    }
    println!("test nCRPS ada_forecast {:.4}", evaluate_backtest(&ada, &held)?.ncrps);
    println!("test nCRPS ablation     {:.4}", evaluate_backtest(&ablation, &held)?.ncrps);
    Ok(())
}
