//! Sample-based CRPS, the quantile-loss nCRPS and a paired t-test.
//!
//!     cargo run --example metrics

use adasample::metrics::{crps_samples, ncrps, paired_t_test, QuantileGrid};
use adasample::timeseries::SampleForecast;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> adasample::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let draws: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    for y in [0.0, 1.0, 3.0] {
        println!("CRPS of N(0, 1) samples at y = {y}: {:.4}", crps_samples(&draws, y));
    }

    // two forecasts of a 3-step target, one centred and one biased
    let target = vec![vec![10.0, 11.0, 12.0]];
    let grid = QuantileGrid::default();
    for bias in [0.0, 2.0] {
        let samples = (0..200)
            .map(|_| target[0].iter().map(|y| y + bias + normal.sample(&mut rng)).collect())
            .collect();
        let f = SampleForecast {
            series_id: "s".into(),
            num_samples: 200,
            samples,
            forecast_start: 0,
        };
        println!("bias {bias}: nCRPS {:.4}", ncrps(&[f], &target, &grid)?.ncrps);
    }

    let a = [0.051, 0.048, 0.055, 0.050, 0.049];
    let b = [0.062, 0.060, 0.061, 0.066, 0.058];
    println!("paired t-test p = {:.2e}", paired_t_test(&a, &b)?);
    Ok(())
}
