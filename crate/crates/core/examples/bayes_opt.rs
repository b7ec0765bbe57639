//! GP-guided search with successive-halving early stopping on a toy
//! objective whose noise shrinks with the resource spent.
//!
//!     cargo run --release --example bayes_opt

use adasample::bayesopt::{optimize, Dimension, FnObjective, SchedulerConfig, SearchSpace, TrialStatus};

fn main() -> adasample::Result<()> {
    let space = SearchSpace::new(vec![Dimension::linear("x", 0.0, 1.0), Dimension::log("y", 1e-3, 1.0)])?;
    let objective = FnObjective(|p: &[f64], epochs: u32| {
        (p[0] - 0.3).powi(2) + (p[1].ln() - 0.01f64.ln()).powi(2) / 40.0 + 0.5 / epochs as f64
    });
    let config = SchedulerConfig {
        random_init_count: 10,
        max_trials: Some(40),
        rungs: vec![1, 3, 9],
        max_concurrency: 3,
        ..SchedulerConfig::default()
    };
    let out = optimize(&objective, &space, &config, 7)?;
    let count = |s: TrialStatus| out.history.iter().filter(|t| t.status == s).count();
    println!(
        "{} trials: {} completed, {} stopped early",
        out.history.len(),
        count(TrialStatus::Completed),
        count(TrialStatus::Stopped)
    );
    println!(
        "best trial {} at x = {:.3}, y = {:.4}, loss {:.4}",
        out.best_trial, out.best_config[0], out.best_config[1], out.best_loss
    );
    Ok(())
}
