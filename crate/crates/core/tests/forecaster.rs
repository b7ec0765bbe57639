use adasample::forecaster::{
    build_model, load_checkpoint, nll_loss, nll_loss_and_grad, param_count, save_checkpoint, train, NetConfig,
    Trainable,
};
use adasample::sampling::{DistributionSampler, TimeStepDistribution};
use adasample::timeseries::{Dataset, DatasetMeta, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_dataset(n: usize, len: usize, context: usize, horizon: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = (0..n)
        .map(|i| {
            let phase = rng.random::<f64>() * 6.0;
            let values = (0..len)
                .map(|t| 2.0 + (t as f64 / 4.0 + phase).sin() + 0.1 * rng.random::<f64>())
                .collect();
            TimeSeries::new(format!("s{i}"), 0, values).unwrap()
        })
        .collect();
    Dataset::new(
        series,
        DatasetMeta {
            context_length: context,
            prediction_length: horizon,
            frequency: "1".into(),
        },
    )
    .unwrap()
}

/// Central differences on every coordinate of 100 random small networks.
#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 100 {
        let layers = rng.random_range(1..=3);
        let hidden = rng.random_range(1..=7);
        if param_count(layers, hidden) > 500 {
            continue;
        }
        let cfg = NetConfig {
            num_layers: layers,
            hidden_size: hidden,
            ..NetConfig::default()
        };
        let mut model = build_model(&cfg, rng.random()).unwrap();
        for w in model.weights.iter_mut() {
            *w *= rng.random_range(0.5..1.5);
        }
        let context = rng.random_range(1..=5);
        let horizon = rng.random_range(1..=4);
        let raw: Vec<f64> = (0..context + horizon).map(|_| rng.random_range(0.5..3.0)).collect();
        let scale = raw[..context].iter().sum::<f64>() / context as f64;
        let scaled: Vec<f64> = raw.iter().map(|v| v / scale).collect();

        let (loss, grad) = nll_loss_and_grad(&model, &scaled, context).unwrap();
        assert!((loss - nll_loss(&model, &scaled, context).unwrap()).abs() < 1e-12);
        for i in 0..model.weights.len() {
            let mut central = |h: f64| {
                let orig = model.weights[i];
                model.weights[i] = orig + h;
                let up = nll_loss(&model, &scaled, context).unwrap();
                model.weights[i] = orig - h;
                let down = nll_loss(&model, &scaled, context).unwrap();
                model.weights[i] = orig;
                (up - down) / (2.0 * h)
            };
            // Richardson extrapolation cancels the h^2 error term
            let h = 1e-4;
            let numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel < 1e-4,
                "layers {layers} hidden {hidden} coord {i}: analytic {} numeric {numeric}",
                grad[i]
            );
        }
        checked += 1;
    }
}

#[test]
fn ada_only_training_leaves_frozen_weights_bit_identical() {
    let data = toy_dataset(3, 60, 8, 4, 1);
    for seed in 0..5u64 {
        let cfg = NetConfig {
            num_layers: 2,
            hidden_size: 6,
            epochs: 3,
            batches_per_epoch: 2,
            batch_size: 4,
            learning_rate: 1e-2,
            ..NetConfig::default()
        };
        let init = build_model(&cfg, seed).unwrap();
        let out = train(&data, DistributionSampler::uniform(), init.clone(), Trainable::AdaOnly, &cfg, seed).unwrap();
        for (i, w) in init.frozen() {
            assert_eq!(w.to_bits(), out.weights.weights[i].to_bits());
        }
        let moved = init
            .weights
            .iter()
            .zip(&out.weights.weights)
            .zip(&init.ada_mask)
            .filter(|((a, b), m)| **m && a != b)
            .count();
        assert!(moved > 0);
    }
}

#[test]
fn zero_learning_rate_keeps_weights_and_trace() {
    let data = toy_dataset(2, 50, 6, 3, 2);
    let cfg = NetConfig {
        num_layers: 2,
        hidden_size: 4,
        epochs: 3,
        batches_per_epoch: 2,
        batch_size: 4,
        learning_rate: 0.0,
        ..NetConfig::default()
    };
    let init = build_model(&cfg, 3).unwrap();
    let out = train(&data, DistributionSampler::uniform(), init.clone(), Trainable::All, &cfg, 5).unwrap();
    assert_eq!(out.weights.weights, init.weights);
    assert_eq!(out.loss_trace.len(), 3);
    assert!(out.loss_trace.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn point_mass_samples_only_the_newest_start() {
    let data = toy_dataset(3, 40, 5, 3, 4);
    let cfg = NetConfig {
        num_layers: 2,
        hidden_size: 3,
        epochs: 2,
        batches_per_epoch: 3,
        batch_size: 5,
        ..NetConfig::default()
    };
    let init = build_model(&cfg, 1).unwrap();
    let sampler = DistributionSampler::new(TimeStepDistribution::geometric(1.0).unwrap()).unwrap();
    let mut trainer =
        adasample::forecaster::Trainer::new(&data, sampler, init, Trainable::AdaOnly, &cfg, 9).unwrap().record_starts();
    trainer.run_epochs(2).unwrap();
    let starts = trainer.finish().sampled_starts.unwrap();
    assert_eq!(starts.len(), 30);
    assert!(starts.iter().all(|s| s.start == 40 - 8 + 1));
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let data = toy_dataset(2, 50, 6, 3, 6);
    let cfg = NetConfig {
        num_layers: 2,
        hidden_size: 5,
        epochs: 2,
        batches_per_epoch: 2,
        batch_size: 8,
        ..NetConfig::default()
    };
    let run = || {
        let init = build_model(&cfg, 11).unwrap();
        train(&data, DistributionSampler::uniform(), init, Trainable::All, &cfg, 12).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.loss_trace, b.loss_trace);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_checkpoint(&path, &a.weights).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), a.weights);
}

#[test]
fn forecasts_have_requested_shape() {
    let data = toy_dataset(3, 40, 6, 5, 7);
    let cfg = NetConfig {
        num_layers: 1,
        hidden_size: 4,
        ..NetConfig::default()
    };
    let model = build_model(&cfg, 2).unwrap();
    let f = adasample::forecaster::forecast(&data, &model, 7, 3).unwrap();
    assert_eq!(f.len(), 3);
    for (fc, s) in f.iter().zip(&data.series) {
        assert_eq!(fc.samples.len(), 7);
        assert!(fc.samples.iter().all(|r| r.len() == 5 && r.iter().all(|v| v.is_finite())));
        assert_eq!(fc.forecast_start, s.start + s.len() as i64);
    }
    assert_eq!(f, adasample::forecaster::forecast(&data, &model, 7, 3).unwrap());
}
