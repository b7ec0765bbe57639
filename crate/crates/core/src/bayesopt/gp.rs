//! Gaussian-process surrogate with an ARD Matérn-5/2 kernel.
//!
//! Targets are standardized before fitting; predictions come back in the
//! original units. Length scales (and optionally the noise variance) are
//! chosen by coordinate search on the log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Diagonal jitter added to every kernel matrix.
pub const JITTER: f64 = 1e-8;
pub const LENGTH_SCALE_BOUNDS: [f64; 2] = [1e-2, 10.0];
const NOISE_BOUNDS: [f64; 2] = [1e-6, 1e-1];
const GRID_POINTS: usize = 16;
const SWEEPS: usize = 2;

/// Observation noise variance, in standardized target units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    Fixed(f64),
    Fitted,
}

pub fn matern52(a: &[f64], b: &[f64], length_scales: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let s5r = (5.0 * r2).sqrt();
    (1.0 + s5r + 5.0 / 3.0 * r2) * (-s5r).exp()
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    length_scales: Vec<f64>,
    noise: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

impl Surrogate {
    /// Fits length scales (and noise, when [`NoiseModel::Fitted`]).
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], noise: NoiseModel) -> Result<Self> {
        check_inputs(&x, y)?;
        let dim = x[0].len();
        let ls_grid = log_grid(LENGTH_SCALE_BOUNDS, GRID_POINTS);
        let noise_grid = log_grid(NOISE_BOUNDS, 6);
        let mut ls = vec![0.3; dim];
        let mut nv = match noise {
            NoiseModel::Fixed(v) => v,
            NoiseModel::Fitted => 1e-3,
        };
        let mut best = Surrogate::with_hyperparameters(x.clone(), y, ls.clone(), nv)?;
        for _ in 0..SWEEPS {
            for d in 0..dim {
                for &cand in &ls_grid {
                    let mut trial = ls.clone();
                    trial[d] = cand;
                    if let Ok(s) = Surrogate::with_hyperparameters(x.clone(), y, trial.clone(), nv) {
                        if s.lml > best.lml {
                            ls = trial;
                            best = s;
                        }
                    }
                }
            }
            if let NoiseModel::Fitted = noise {
                for &cand in &noise_grid {
                    if let Ok(s) = Surrogate::with_hyperparameters(x.clone(), y, ls.clone(), cand) {
                        if s.lml > best.lml {
                            nv = cand;
                            best = s;
                        }
                    }
                }
            }
        }
        Ok(best)
    }

    pub fn with_hyperparameters(x: Vec<Vec<f64>>, y: &[f64], length_scales: Vec<f64>, noise: f64) -> Result<Self> {
        check_inputs(&x, y)?;
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));

        let k = DMatrix::from_fn(n, n, |i, j| {
            let base = matern52(&x[i], &x[j], &length_scales);
            if i == j {
                base + noise + JITTER
            } else {
                base
            }
        });
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::invalid("surrogate", "kernel matrix not positive definite"))?;
        let alpha = chol.solve(&ys);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let lml = -0.5 * ys.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if !lml.is_finite() {
            return Err(Error::invalid("surrogate", "non-finite marginal likelihood"));
        }
        Ok(Surrogate {
            x,
            y_mean,
            y_std,
            length_scales,
            noise,
            chol,
            alpha,
            lml,
        })
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Posterior mean and latent variance at `point`, in original units.
    pub fn predict(&self, point: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks = DVector::from_iterator(n, self.x.iter().map(|xi| matern52(xi, point, &self.length_scales)));
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("triangular factor is invertible");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (mean * self.y_std + self.y_mean, var * self.y_std * self.y_std)
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid("surrogate", "need matching, non-empty inputs and targets"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("surrogate", "non-finite target"));
    }
    Ok(())
}

fn log_grid([lo, hi]: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gain = best - mean;
    if !(sd > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / sd;
    (gain * std_normal_cdf(z) + sd * std_normal_pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_one_at_zero_distance() {
        assert_eq!(matern52(&[0.2, 0.4], &[0.2, 0.4], &[0.1, 0.3]), 1.0);
        assert!(matern52(&[0.0], &[1.0], &[0.1]) < 1e-5);
    }

    #[test]
    fn ei_zero_variance() {
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!(expected_improvement(1.0, 1.0, 1.0) > 0.0);
    }
}
