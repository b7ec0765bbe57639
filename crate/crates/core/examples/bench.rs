//! Seeded comparison of ada_forecast, the uniform ablation and the
//! pretrained model on one scenario.
//!
//!     cargo run --release --example bench -- a 3

use adasample::bayesopt::SchedulerConfig;
use adasample::forecaster::NetConfig;
use adasample::pipeline::{bench, FinetuneConfig, RunConfig};
use adasample::synth::Case;

fn main() -> adasample::Result<()> {
    let mut args = std::env::args().skip(1);
    let case = match args.next().as_deref() {
        Some("b") => Case::B,
        Some("c") => Case::C,
        Some("none") => Case::Unshifted,
        _ => Case::A,
    };
    let seeds = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
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
    let report = bench(case, seeds, &run, None)?;
    for s in &report.seeds {
        println!(
            "seed {}: nCRPS {:.4} / {:.4} / {:.4}, shifted-window mass learned {:.3} vs uniform {:.3}",
            s.seed, s.ada_forecast, s.ablation_uniform, s.pretrain_only, s.mass_learned, s.mass_uniform
        );
    }
    println!("{}", report.table);
    Ok(())
}
