//! Sinusoidal datasets with injected shifts and their ground-truth masks.
//!
//! Time indices are 1-based over `[1, T + tau]`: `T` steps of history
//! followed by the forecast window.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::sampling::{offset_to_start, TruncatedIndexPmf};
use crate::timeseries::{Dataset, DatasetMeta, StartRange, TimeSeries};

/// Where shifts sit relative to the end of history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// A shift covering the last context steps and the forecast window.
    A,
    /// Shifts that revert before the recent window.
    B,
    /// A shift that starts only after the history ends.
    C,
    /// No shift at all.
    #[serde(rename = "none")]
    Unshifted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    AdditiveLevel,
    NegativeConstant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub case: Case,
    pub num_series: usize,
    /// History length `T`.
    pub length: usize,
    pub period: f64,
    pub amplitude: f64,
    pub base_noise_sd: f64,
    /// Inclusive 1-based `[start, end]` intervals.
    pub shift_regions: Vec<[usize; 2]>,
    pub shift_kind: ShiftKind,
    pub shift_magnitude: f64,
    pub seed: u64,
    /// Per-series level offsets are drawn uniformly from this interval.
    #[serde(default = "default_offset_range")]
    pub offset_range: [f64; 2],
}

fn default_offset_range() -> [f64; 2] {
    [1.0, 2.0]
}

/// Window geometry used by the default scenarios.
pub const DEFAULT_CONTEXT: usize = 24;
pub const DEFAULT_HORIZON: usize = 24;

impl ScenarioSpec {
    fn base(case: Case, seed: u64) -> Self {
        ScenarioSpec {
            case,
            num_series: 20,
            length: 600,
            period: 24.0,
            amplitude: 1.0,
            base_noise_sd: 0.1,
            shift_regions: Vec::new(),
            shift_kind: ShiftKind::AdditiveLevel,
            shift_magnitude: 0.0,
            seed,
            offset_range: default_offset_range(),
        }
    }

    /// Level shift of +3 in `[151, 250]` and from 501 through the forecast
    /// window.
    pub fn scenario_a(seed: u64) -> Self {
        ScenarioSpec {
            shift_regions: vec![[151, 250], [501, 624]],
            shift_kind: ShiftKind::AdditiveLevel,
            shift_magnitude: 3.0,
            ..Self::base(Case::A, seed)
        }
    }

    /// Values replaced by -3 in `[100, 150]` and `[300, 350]`.
    pub fn scenario_b(seed: u64) -> Self {
        ScenarioSpec {
            shift_regions: vec![[100, 150], [300, 350]],
            shift_kind: ShiftKind::NegativeConstant,
            shift_magnitude: 3.0,
            ..Self::base(Case::B, seed)
        }
    }

    /// Level shift of +3 beginning right after the history.
    pub fn scenario_c(seed: u64) -> Self {
        ScenarioSpec {
            shift_regions: vec![[601, 624]],
            shift_kind: ShiftKind::AdditiveLevel,
            shift_magnitude: 3.0,
            ..Self::base(Case::C, seed)
        }
    }

    pub fn stationary(seed: u64) -> Self {
        Self::base(Case::Unshifted, seed)
    }

    pub fn validate(&self, context_length: usize, prediction_length: usize) -> Result<()> {
        let invalid = |m: String| Err(Error::invalid("scenario", m));
        let t = self.length;
        let total = t + prediction_length;
        if self.num_series == 0 {
            return invalid("num_series must be positive".into());
        }
        if context_length == 0 || prediction_length == 0 {
            return invalid("context and prediction lengths must be positive".into());
        }
        if t < context_length + 2 * prediction_length {
            return invalid(format!(
                "length {t} is below context + 2 * horizon = {}",
                context_length + 2 * prediction_length
            ));
        }
        if !(self.period > 0.0) || !self.amplitude.is_finite() || !(self.base_noise_sd >= 0.0) {
            return invalid("period must be positive, amplitude finite and noise sd non-negative".into());
        }
        if !self.shift_magnitude.is_finite() {
            return invalid("shift_magnitude must be finite".into());
        }
        let [lo, hi] = self.offset_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return invalid("offset_range must be an ordered finite pair".into());
        }
        let mut regions = self.shift_regions.clone();
        regions.sort();
        for r in &regions {
            if r[0] < 1 || r[0] > r[1] || r[1] > total {
                return invalid(format!("region [{}, {}] outside [1, {total}]", r[0], r[1]));
            }
        }
        if let Some(w) = regions.windows(2).find(|w| w[1][0] <= w[0][1]) {
            return invalid(format!("regions [{}, {}] and [{}, {}] overlap", w[0][0], w[0][1], w[1][0], w[1][1]));
        }
        // `c` here is the recent window: the final context steps of history.
        let c = context_length;
        match self.case {
            Case::A => {
                if !regions.iter().any(|r| r[0] + c <= t + 1 && r[1] >= total) {
                    return invalid(format!(
                        "case A needs a region covering [{}, {total}]",
                        t + 1 - c
                    ));
                }
            }
            Case::B => {
                if regions.is_empty() || regions.iter().any(|r| r[1] >= t - c) {
                    return invalid(format!("case B needs regions, all ending before {}", t - c));
                }
            }
            Case::C => {
                if regions.is_empty() || regions.iter().any(|r| r[0] <= t) {
                    return invalid(format!("case C needs regions, all starting after {t}"));
                }
            }
            Case::Unshifted => {
                if !regions.is_empty() {
                    return invalid("the unshifted case takes no regions".into());
                }
            }
        }
        Ok(())
    }

    /// Per-series `(phase, offset)`.
    pub fn series_params(&self) -> Vec<(f64, f64)> {
        (0..self.num_series)
            .map(|i| {
                let mut rng = rng::stream(self.seed, Purpose::Synth, 2 * i as u64);
                let phase = rng.random::<f64>() * 2.0 * PI;
                let [lo, hi] = self.offset_range;
                let offset = lo + rng.random::<f64>() * (hi - lo);
                (phase, offset)
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Shift indicator per series over `[1, T + tau]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftMask {
    pub masks: Vec<Vec<bool>>,
}

impl ShiftMask {
    pub fn series(&self, i: usize) -> &[bool] {
        &self.masks[i]
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for m in &self.masks {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Builds the dataset (series of length `T + tau`) and its mask.
pub fn generate(spec: &ScenarioSpec, context_length: usize, prediction_length: usize) -> Result<(Dataset, ShiftMask)> {
    spec.validate(context_length, prediction_length)?;
    let total = spec.length + prediction_length;
    let mut mask = vec![false; total];
    for r in &spec.shift_regions {
        mask[r[0] - 1..r[1]].iter_mut().for_each(|m| *m = true);
    }
    let noise = Normal::new(0.0, spec.base_noise_sd).map_err(|e| Error::invalid("scenario", e.to_string()))?;
    let mut series = Vec::with_capacity(spec.num_series);
    for (i, (phase, offset)) in spec.series_params().into_iter().enumerate() {
        let mut rng = rng::stream(spec.seed, Purpose::Synth, 2 * i as u64 + 1);
        let values = (1..=total)
            .map(|t| {
                let eps = noise.sample(&mut rng);
                let v = spec.amplitude * (2.0 * PI * t as f64 / spec.period + phase).sin() + offset + eps;
                match (mask[t - 1], spec.shift_kind) {
                    (false, _) => v,
                    (true, ShiftKind::AdditiveLevel) => v + spec.shift_magnitude,
                    (true, ShiftKind::NegativeConstant) => -spec.shift_magnitude.abs(),
                }
            })
            .collect();
        series.push(TimeSeries::new(format!("series_{i}"), 1, values)?);
    }
    let dataset = Dataset::new(
        series,
        DatasetMeta {
            context_length,
            prediction_length,
            frequency: "1".to_string(),
        },
    )?;
    let masks = vec![mask; spec.num_series];
    Ok((dataset, ShiftMask { masks }))
}

/// Probability that a window drawn from `pmf` overlaps a masked step.
/// Offsets index `range` from its newest start; a window at start `s` covers
/// `[s, s + window - 1]`.
pub fn mass_on_mask(pmf: &TruncatedIndexPmf, mask: &[bool], range: StartRange, window: usize) -> Result<f64> {
    if pmf.support_size() != range.len() {
        return Err(Error::LengthMismatch {
            left: pmf.support_size(),
            right: range.len(),
        });
    }
    if range.last + window - 1 > mask.len() {
        return Err(Error::WindowTooLong {
            length: mask.len(),
            required: range.last + window - 1,
        });
    }
    // prefix[i] = number of masked steps among the first i
    let mut prefix = vec![0usize; mask.len() + 1];
    for (i, m) in mask.iter().enumerate() {
        prefix[i + 1] = prefix[i] + *m as usize;
    }
    let mut mass = 0.0;
    for (offset, p) in pmf.probs().iter().enumerate() {
        let s = offset_to_start(offset, range)?;
        if prefix[s + window - 1] > prefix[s - 1] {
            mass += p;
        }
    }
    Ok(mass.min(1.0))
}
