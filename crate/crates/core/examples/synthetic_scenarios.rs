//! Synthetic sinusoids with injected shifts, and how much uniform sampling
//! lands on them.
//!
//!     cargo run --example synthetic_scenarios

use adasample::sampling::TruncatedIndexPmf;
use adasample::synth::{generate, mass_on_mask, ScenarioSpec, DEFAULT_CONTEXT, DEFAULT_HORIZON};
use adasample::timeseries::valid_start_range;

fn main() -> adasample::Result<()> {
    let (c, tau) = (DEFAULT_CONTEXT, DEFAULT_HORIZON);
    for spec in [
        ScenarioSpec::scenario_a(0),
        ScenarioSpec::scenario_b(0),
        ScenarioSpec::scenario_c(0),
        ScenarioSpec::stationary(0),
    ] {
        let (data, mask) = generate(&spec, c, tau)?;
        let series = &data.series[0];
        let shifted = mask.series(0).iter().filter(|m| **m).count();

        // windows available to fine-tuning end tau steps before the history does
        let train_len = series.len() - 2 * tau;
        let range = valid_start_range(train_len, c, tau)?;
        let uniform = TruncatedIndexPmf::uniform(range.len())?;
        let mass = mass_on_mask(&uniform, mask.series(0), range, c + tau)?;
        println!(
            "{:?}: {} series of {} steps, {shifted} shifted steps, regions {:?}, uniform overlap {mass:.3}",
            spec.case,
            data.len(),
            series.len(),
            spec.shift_regions
        );
    }

    let mut bad = ScenarioSpec::scenario_a(0);
    bad.shift_regions = vec![[100, 200]];
    println!("misplaced case A region: {}", bad.validate(c, tau).unwrap_err());
    Ok(())
}
