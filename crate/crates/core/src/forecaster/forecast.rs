use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::network::State;
use super::WeightPartition;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::timeseries::{scale_of, Dataset, SampleForecast};

/// Ancestral sampling of `prediction_length` steps after the end of every
/// series. The context is the trailing `context_length` values; samples are
/// drawn in scaled space and multiplied back by the context scale.
pub fn forecast(
    dataset: &Dataset,
    weights: &WeightPartition,
    num_samples: usize,
    seed: u64,
) -> Result<Vec<SampleForecast>> {
    weights.check()?;
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be positive"));
    }
    let layout = weights.layout();
    let params = &weights.weights;
    let context = dataset.context_length;
    let horizon = dataset.prediction_length;

    dataset
        .series
        .par_iter()
        .enumerate()
        .map(|(i, series)| {
            if series.len() < context {
                return Err(Error::SeriesTooShort {
                    id: series.id.clone(),
                    required: context,
                    actual: series.len(),
                });
            }
            let ctx = &series.values[series.len() - context..];
            let scale = scale_of(ctx);
            let mut state = State::new(&layout);
            let mut head = None;
            for (t, v) in ctx.iter().enumerate() {
                let g = state.step(params, &layout, v / scale);
                if !(g.mu.is_finite() && g.sigma.is_finite()) {
                    return Err(Error::NonFiniteStep { step: t });
                }
                head = Some(g);
            }
            let first = head.expect("context is non-empty");
            let mut rng = rng::stream(seed, Purpose::Forecast, i as u64);
            let mut samples = Vec::with_capacity(num_samples);
            for _ in 0..num_samples {
                let mut path_state = state.clone();
                let mut g = first;
                let mut row = Vec::with_capacity(horizon);
                for step in 0..horizon {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    let y = g.mu + g.sigma * eps;
                    if !y.is_finite() {
                        return Err(Error::NonFiniteStep { step: context + step });
                    }
                    row.push(y * scale);
                    if step + 1 < horizon {
                        g = path_state.step(params, &layout, y);
                    }
                }
                samples.push(row);
            }
            Ok(SampleForecast {
                series_id: series.id.clone(),
                num_samples,
                samples,
                forecast_start: series.start + series.len() as i64,
            })
        })
        .collect()
}
