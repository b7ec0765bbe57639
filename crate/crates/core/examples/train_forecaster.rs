//! Pretrain the recurrent forecaster, fine-tune only its adaptive layers on
//! recent windows and score both on a held-out horizon.
//!
//!     cargo run --release --example train_forecaster

use adasample::forecaster::{build_model, forecast, train, NetConfig, Trainable};
use adasample::metrics::{ncrps, QuantileGrid};
use adasample::sampling::{DistributionSampler, TimeStepDistribution};
use adasample::synth::{generate, ScenarioSpec};

fn main() -> adasample::Result<()> {
    let (full, _) = generate(&ScenarioSpec::scenario_a(3), 24, 24)?;
    let history = full.drop_last(24)?;
    let targets: Vec<Vec<f64>> = full.series.iter().map(|s| s.values[s.len() - 24..].to_vec()).collect();

    let cfg = NetConfig {
        hidden_size: 16,
        learning_rate: 1e-2,
        epochs: 20,
        batches_per_epoch: 10,
        ..NetConfig::default()
    };
    let init = build_model(&cfg, 1)?;
    println!("{} parameters, {} adaptive", init.param_count(), init.adaptive_count());

    let pre = train(&history, DistributionSampler::uniform(), init, Trainable::All, &cfg, 2)?;
    let trace: Vec<String> = pre.loss_trace.iter().step_by(5).map(|l| format!("{l:.3}")).collect();
    println!("pretrain loss every 5 epochs: {}", trace.join(" "));

    // favour the newest windows, where the level shift lives
    let recent = DistributionSampler::new(TimeStepDistribution::geometric(0.02)?)?;
    let tune_cfg = NetConfig {
        learning_rate: 3e-3,
        epochs: 20,
        batches_per_epoch: 2,
        ..cfg.clone()
    };
    let tuned = train(&history, recent, pre.weights.clone(), Trainable::AdaOnly, &tune_cfg, 3)?;

    let grid = QuantileGrid::default();
    for (name, weights) in [("pretrained", &pre.weights), ("fine-tuned", &tuned.weights)] {
        let f = forecast(&history, weights, 100, 4)?;
        println!("{name}: nCRPS {:.4}", ncrps(&f, &targets, &grid)?.ncrps);
    }
    Ok(())
}
