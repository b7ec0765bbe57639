//! Discrete distributions over window-start offsets.
//!
//! A [`TimeStepDistribution`] is evaluated at recency offsets `k = 0, 1, ...`
//! where offset 0 is the most recent valid window start. For a concrete
//! series it is truncated to the `S` valid starts and renormalized into a
//! [`TruncatedIndexPmf`], from which offsets are drawn by inverse CDF.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::timeseries::StartRange;

/// Smallest total mass accepted on a truncated support.
pub const MIN_TRUNCATED_MASS: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeBinomial {
    pub r: f64,
    pub p: f64,
}

impl NegativeBinomial {
    fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid("negbin.r", format!("{} is not > 0", self.r)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid("negbin.p", format!("{} is not in (0, 1)", self.p)));
        }
        Ok(())
    }

    fn ln_pmf(&self, k: usize) -> f64 {
        let k = k as f64;
        ln_gamma(k + self.r) - ln_gamma(k + 1.0) - ln_gamma(self.r)
            + self.r * self.p.ln()
            + k * (-self.p).ln_1p()
    }

    /// `ln pmf(k)` for `k < len`. Walks the ratio recurrence and re-anchors
    /// on the log-gamma form every 512 steps to bound drift.
    fn ln_pmf_table(&self, len: usize) -> Vec<f64> {
        let ln_q = (-self.p).ln_1p();
        let mut out = Vec::with_capacity(len);
        let mut cur = 0.0;
        for k in 0..len {
            if k % 512 == 0 {
                cur = self.ln_pmf(k);
            } else {
                let km1 = (k - 1) as f64;
                cur += ln_q + (km1 + self.r).ln() - (km1 + 1.0).ln();
            }
            out.push(cur);
        }
        out
    }
}

/// Parametric `p_phi` over recency offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TimeStepDistribution {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "geometric")]
    Geometric { p: f64 },
    #[serde(rename = "negbin")]
    NegativeBinomial(NegativeBinomial),
    #[serde(rename = "mixnb2")]
    MixtureNb2 {
        w: f64,
        c1: NegativeBinomial,
        c2: NegativeBinomial,
    },
}

impl TimeStepDistribution {
    pub fn geometric(p: f64) -> Result<Self> {
        let d = TimeStepDistribution::Geometric { p };
        d.validate()?;
        Ok(d)
    }

    pub fn negative_binomial(r: f64, p: f64) -> Result<Self> {
        let d = TimeStepDistribution::NegativeBinomial(NegativeBinomial { r, p });
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(w: f64, c1: NegativeBinomial, c2: NegativeBinomial) -> Result<Self> {
        let d = TimeStepDistribution::MixtureNb2 { w, c1, c2 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeStepDistribution::Uniform => Ok(()),
            TimeStepDistribution::Geometric { p } => {
                if *p > 0.0 && *p <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("geometric.p", format!("{p} is not in (0, 1]")))
                }
            }
            TimeStepDistribution::NegativeBinomial(nb) => nb.validate(),
            TimeStepDistribution::MixtureNb2 { w, c1, c2 } => {
                if !(0.0..=1.0).contains(w) {
                    return Err(Error::invalid("mixnb2.w", format!("{w} is not in [0, 1]")));
                }
                c1.validate()?;
                c2.validate()
            }
        }
    }

    /// Natural log of the untruncated pmf at offset `k`.
    pub fn ln_pmf_at(&self, k: usize) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            TimeStepDistribution::Uniform => return Err(Error::UniformUnbounded),
            TimeStepDistribution::Geometric { p } => geometric_ln_pmf(*p, k),
            TimeStepDistribution::NegativeBinomial(nb) => nb.ln_pmf(k),
            TimeStepDistribution::MixtureNb2 { w, c1, c2 } => {
                mix_ln(*w, c1.ln_pmf(k), c2.ln_pmf(k))
            }
        })
    }

    fn ln_pmf_table(&self, len: usize) -> Vec<f64> {
        match self {
            TimeStepDistribution::Uniform => vec![0.0; len],
            TimeStepDistribution::Geometric { p } => {
                (0..len).map(|k| geometric_ln_pmf(*p, k)).collect()
            }
            TimeStepDistribution::NegativeBinomial(nb) => nb.ln_pmf_table(len),
            TimeStepDistribution::MixtureNb2 { w, c1, c2 } => c1
                .ln_pmf_table(len)
                .into_iter()
                .zip(c2.ln_pmf_table(len))
                .map(|(a, b)| mix_ln(*w, a, b))
                .collect(),
        }
    }
}

fn geometric_ln_pmf(p: f64, k: usize) -> f64 {
    if p == 1.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    p.ln() + k as f64 * (-p).ln_1p()
}

fn mix_ln(w: f64, a: f64, b: f64) -> f64 {
    if w == 1.0 {
        return a;
    }
    if w == 0.0 {
        return b;
    }
    log_sum_exp(w.ln() + a, (-w).ln_1p() + b)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Untruncated pmf of `dist` at offset `k`.
pub fn pmf_at(dist: &TimeStepDistribution, k: usize) -> Result<f64> {
    Ok(dist.ln_pmf_at(k)?.exp().clamp(0.0, 1.0))
}

/// Finite-support pmf over offsets `0..S` with a cached CDF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr", into = "PmfRepr")]
pub struct TruncatedIndexPmf {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PmfRepr {
    support_size: usize,
    probs: Vec<f64>,
}

impl TryFrom<PmfRepr> for TruncatedIndexPmf {
    type Error = Error;

    fn try_from(repr: PmfRepr) -> Result<Self> {
        if repr.support_size != repr.probs.len() {
            return Err(Error::LengthMismatch {
                left: repr.support_size,
                right: repr.probs.len(),
            });
        }
        TruncatedIndexPmf::from_probs(repr.probs)
    }
}

impl From<TruncatedIndexPmf> for PmfRepr {
    fn from(pmf: TruncatedIndexPmf) -> Self {
        PmfRepr {
            support_size: pmf.probs.len(),
            probs: pmf.probs,
        }
    }
}

impl TruncatedIndexPmf {
    /// Validates nonnegativity and unit mass (within 1e-9).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("pmf", "empty support"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("pmf", "negative or non-finite probability"));
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if (acc - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("pmf", format!("total mass {acc} is not 1")));
        }
        Ok(TruncatedIndexPmf { probs, cdf })
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn uniform(support: usize) -> Result<Self> {
        truncate_renormalize(&TimeStepDistribution::Uniform, support)
    }
}

/// Restricts `dist` to offsets `0..support` and renormalizes.
pub fn truncate_renormalize(dist: &TimeStepDistribution, support: usize) -> Result<TruncatedIndexPmf> {
    if support == 0 {
        return Err(Error::invalid("support", "must be at least 1"));
    }
    dist.validate()?;
    if let TimeStepDistribution::Uniform = dist {
        return TruncatedIndexPmf::from_probs(vec![1.0 / support as f64; support]);
    }
    let ln_p = dist.ln_pmf_table(support);
    let max = ln_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::DegenerateDistribution { support });
    }
    let rel_total: f64 = ln_p.iter().map(|l| (l - max).exp()).sum();
    let ln_total = max + rel_total.ln();
    if ln_total < MIN_TRUNCATED_MASS.ln() {
        return Err(Error::DegenerateDistribution { support });
    }
    let probs = ln_p.iter().map(|l| (l - max).exp() / rel_total).collect();
    TruncatedIndexPmf::from_probs(probs)
}

/// Inverse-CDF draw of an offset in `0..S`.
pub fn sample_offset<R: RngCore + ?Sized>(pmf: &TruncatedIndexPmf, rng: &mut R) -> usize {
    let total = *pmf.cdf.last().expect("non-empty support");
    let u = rng.random::<f64>() * total;
    pmf.cdf.partition_point(|&c| c <= u).min(pmf.cdf.len() - 1)
}

/// Maps a recency offset to a 1-based window start: offset 0 is the newest.
pub fn offset_to_start(offset: usize, range: StartRange) -> Result<usize> {
    if offset >= range.len() {
        return Err(Error::OffsetOutOfRange {
            offset,
            size: range.len(),
        });
    }
    Ok(range.last - offset)
}

/// Inverse of [`offset_to_start`].
pub fn start_to_offset(start: usize, range: StartRange) -> Result<usize> {
    if !range.contains(start) {
        return Err(Error::OffsetOutOfRange {
            offset: start,
            size: range.len(),
        });
    }
    Ok(range.last - start)
}

/// Source of training-window starts.
pub trait WindowSampler: Sync {
    /// Draws a 1-based start inside `range`.
    fn sample_start(&self, range: StartRange, rng: &mut dyn RngCore) -> Result<usize>;
}

/// Samples starts from a [`TimeStepDistribution`], caching one truncated pmf
/// per support size.
#[derive(Debug)]
pub struct DistributionSampler {
    dist: TimeStepDistribution,
    cache: RwLock<HashMap<usize, TruncatedIndexPmf>>,
}

impl DistributionSampler {
    pub fn new(dist: TimeStepDistribution) -> Result<Self> {
        dist.validate()?;
        Ok(DistributionSampler {
            dist,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn uniform() -> Self {
        DistributionSampler {
            dist: TimeStepDistribution::Uniform,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn distribution(&self) -> &TimeStepDistribution {
        &self.dist
    }

    /// Truncated pmf for a support of `support` starts.
    pub fn pmf(&self, support: usize) -> Result<TruncatedIndexPmf> {
        if let Some(p) = self.cache.read().expect("cache lock").get(&support) {
            return Ok(p.clone());
        }
        let pmf = truncate_renormalize(&self.dist, support)?;
        self.cache
            .write()
            .expect("cache lock")
            .insert(support, pmf.clone());
        Ok(pmf)
    }

    /// Builds pmfs ahead of time so degenerate parameters fail early.
    pub fn prepare(&self, supports: impl IntoIterator<Item = usize>) -> Result<()> {
        if matches!(self.dist, TimeStepDistribution::Uniform) {
            return Ok(());
        }
        for s in supports {
            self.pmf(s)?;
        }
        Ok(())
    }
}

impl WindowSampler for DistributionSampler {
    fn sample_start(&self, range: StartRange, rng: &mut dyn RngCore) -> Result<usize> {
        let offset = match self.dist {
            TimeStepDistribution::Uniform => rng.random_range(0..range.len()),
            _ => {
                let support = range.len();
                {
                    let cache = self.cache.read().expect("cache lock");
                    if let Some(pmf) = cache.get(&support) {
                        return offset_to_start(sample_offset(pmf, rng), range);
                    }
                }
                sample_offset(&self.pmf(support)?, rng)
            }
        };
        offset_to_start(offset, range)
    }
}

/// The two families searched by Bayesian optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Geometric,
    Mixnb2,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Geometric => "geometric",
            Family::Mixnb2 => "mixnb2",
        }
    }

    /// Builds a distribution from native parameter values in the order of
    /// `SearchSpace::for_family`: geometric `[p]`, mixnb2 `[w, r1, p1, r2, p2]`.
    pub fn distribution(&self, values: &[f64]) -> Result<TimeStepDistribution> {
        match (self, values) {
            (Family::Geometric, [p]) => TimeStepDistribution::geometric(*p),
            (Family::Mixnb2, [w, r1, p1, r2, p2]) => TimeStepDistribution::mixture(
                *w,
                NegativeBinomial { r: *r1, p: *p1 },
                NegativeBinomial { r: *r2, p: *p2 },
            ),
            _ => Err(Error::invalid(
                "phi",
                format!("{} parameters for family {}", values.len(), self.name()),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn geometric_closed_form() {
        let g = TimeStepDistribution::geometric(0.5).unwrap();
        assert!((pmf_at(&g, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((pmf_at(&g, 1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniform_has_no_unbounded_pmf() {
        assert!(matches!(pmf_at(&TimeStepDistribution::Uniform, 0), Err(Error::UniformUnbounded)));
    }

    #[test]
    fn truncation_examples() {
        let u = truncate_renormalize(&TimeStepDistribution::Uniform, 4).unwrap();
        assert_eq!(u.probs(), &[0.25; 4]);
        let g = truncate_renormalize(&TimeStepDistribution::geometric(0.5).unwrap(), 2).unwrap();
        assert!((g.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.probs()[1] - 1.0 / 3.0).abs() < 1e-15);
        let point = truncate_renormalize(&TimeStepDistribution::geometric(1.0).unwrap(), 5).unwrap();
        assert_eq!(point.probs(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_mass_is_reported() {
        // mean ~ 5e6, support of 3 offsets carries ~1e-1000 mass
        let d = TimeStepDistribution::negative_binomial(500.0, 1e-4).unwrap();
        assert!(matches!(truncate_renormalize(&d, 3), Err(Error::DegenerateDistribution { .. })));
    }

    #[test]
    fn point_mass_always_hits() {
        let pmf = TruncatedIndexPmf::from_probs(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_offset(&pmf, &mut rng), 2);
        }
    }

    #[test]
    fn offset_orientation() {
        let r = StartRange { first: 1, last: 53 };
        assert_eq!(offset_to_start(0, r).unwrap(), 53);
        assert_eq!(offset_to_start(52, r).unwrap(), 1);
        assert!(offset_to_start(53, r).is_err());
        assert_eq!(start_to_offset(53, r).unwrap(), 0);
    }

    #[test]
    fn json_shapes() {
        let d = TimeStepDistribution::mixture(
            0.3,
            NegativeBinomial { r: 2.0, p: 0.1 },
            NegativeBinomial { r: 5.0, p: 0.01 },
        )
        .unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"kind":"mixnb2","w":0.3,"c1":{"r":2.0,"p":0.1},"c2":{"r":5.0,"p":0.01}}"#);
        assert_eq!(serde_json::to_string(&TimeStepDistribution::Uniform).unwrap(), r#"{"kind":"uniform"}"#);
        let nb: TimeStepDistribution = serde_json::from_str(r#"{"kind":"negbin","r":1.5,"p":0.2}"#).unwrap();
        assert_eq!(nb, TimeStepDistribution::negative_binomial(1.5, 0.2).unwrap());
        let back: TimeStepDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
