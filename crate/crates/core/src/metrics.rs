//! Quantile loss, normalized CRPS, sample CRPS and the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::timeseries::SampleForecast;

/// Quantile levels at which forecasts are scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("quantile grid", "empty"));
        }
        if levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::invalid("quantile grid", "levels must lie in (0, 1)"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("quantile grid", "levels must be strictly increasing"));
        }
        Ok(QuantileGrid { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

impl Default for QuantileGrid {
    /// `0.1, 0.2, ..., 0.9`
    fn default() -> Self {
        QuantileGrid {
            levels: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;
    fn try_from(levels: Vec<f64>) -> Result<Self> {
        QuantileGrid::new(levels)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(g: QuantileGrid) -> Self {
        g.levels
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ncrps: f64,
    /// Weighted quantile loss per grid level, same order as the grid.
    pub per_quantile_losses: Vec<f64>,
    /// `sum |y|` over every scored target.
    pub normalizer: f64,
    pub num_series: usize,
    pub num_steps: usize,
}

/// Pinball loss scaled by 2, so that the median term is the absolute error.
pub fn quantile_loss(y: f64, yhat: f64, q: f64) -> f64 {
    2.0 * (q * (y - yhat).max(0.0) + (1.0 - q) * (yhat - y).max(0.0))
}

/// Linear-interpolation quantile of an ascending slice.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean over grid levels of `sum quantile_loss / sum |y|`, pooled over all
/// series and steps.
pub fn ncrps(forecasts: &[SampleForecast], targets: &[Vec<f64>], grid: &QuantileGrid) -> Result<EvalReport> {
    if forecasts.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: forecasts.len(),
            right: targets.len(),
        });
    }
    let levels = grid.levels();
    let mut sums = vec![0.0; levels.len()];
    let mut normalizer = 0.0;
    let mut num_steps = 0;
    let mut column = Vec::new();
    for (f, y) in forecasts.iter().zip(targets) {
        if f.horizon() != y.len() || f.samples.iter().any(|r| r.len() != y.len()) || f.samples.is_empty() {
            return Err(Error::LengthMismatch {
                left: f.horizon(),
                right: y.len(),
            });
        }
        for (t, &target) in y.iter().enumerate() {
            column.clear();
            column.extend(f.samples.iter().map(|r| r[t]));
            column.sort_by(f64::total_cmp);
            for (s, &q) in sums.iter_mut().zip(levels) {
                *s += quantile_loss(target, empirical_quantile(&column, q), q);
            }
            normalizer += target.abs();
            num_steps += 1;
        }
    }
    if normalizer <= 0.0 {
        return Err(Error::NormalizerZero);
    }
    let per_quantile_losses: Vec<f64> = sums.iter().map(|s| s / normalizer).collect();
    let ncrps = per_quantile_losses.iter().sum::<f64>() / levels.len() as f64;
    Ok(EvalReport {
        ncrps,
        per_quantile_losses,
        normalizer,
        num_series: forecasts.len(),
        num_steps,
    })
}

/// Energy-form sample CRPS `E|X - y| - E|X - X'| / 2`, where the second
/// expectation runs over all `n^2` ordered pairs. Sort based, `O(n log n)`.
pub fn crps_samples(samples: &[f64], y: f64) -> f64 {
    let n = samples.len() as f64;
    let abs_err = samples.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    // sum_{i,j} |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i)
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - n + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    (abs_err - 0.5 * pair_sum / (n * n)).max(0.0)
}

/// Two-sided p-value of the paired t statistic on `a - b`.
/// All-zero differences give `p = 1`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test", "needs at least two pairs"));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Ok(1.0);
    }
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(0.0);
    }
    let t = mean / (var / n).sqrt();
    let df = n - 1.0;
    Ok(student_t_two_sided(t, df).clamp(0.0, 1.0))
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// CDF of Student's t.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Sample mean and (n-1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_loss_examples() {
        assert_eq!(quantile_loss(2.0, 1.0, 0.5), 1.0);
        assert!((quantile_loss(0.0, 1.0, 0.9) - 0.2).abs() < 1e-15);
        for q in [0.1, 0.5, 0.9] {
            assert_eq!(quantile_loss(3.3, 3.3, q), 0.0);
        }
    }

    #[test]
    fn crps_examples() {
        assert_eq!(crps_samples(&[1.5, 1.5, 1.5], 1.5), 0.0);
        assert!((crps_samples(&[0.0, 2.0], 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn t_test_conventions() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(paired_t_test(&a, &a).unwrap(), 1.0);
        assert!(paired_t_test(&a, &a[..3]).is_err());
    }

    #[test]
    fn t_cdf_known_values() {
        // df = 1 is Cauchy: F(1) = 3/4
        assert!((student_t_cdf(1.0, 1.0) - 0.75).abs() < 1e-12);
        // df = 2: F(t) = 1/2 + t / (2 sqrt(2 + t^2))
        let t: f64 = 1.3;
        assert!((student_t_cdf(t, 2.0) - (0.5 + t / (2.0 * (2.0 + t * t).sqrt()))).abs() < 1e-12);
        assert_eq!(student_t_cdf(0.0, 7.0), 0.5);
    }

    #[test]
    fn grid_validation() {
        assert!(QuantileGrid::new(vec![0.5, 0.4]).is_err());
        assert!(QuantileGrid::new(vec![0.0, 0.4]).is_err());
        assert_eq!(QuantileGrid::default().levels().len(), 9);
    }
}
