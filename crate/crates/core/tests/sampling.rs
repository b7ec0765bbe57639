use adasample::bayesopt::SearchSpace;
use adasample::sampling::{
    offset_to_start, pmf_at, sample_offset, start_to_offset, truncate_renormalize, DistributionSampler, Family,
    NegativeBinomial, TimeStepDistribution, TruncatedIndexPmf, WindowSampler,
};
use adasample::timeseries::StartRange;
use adasample::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete};

fn total(pmf: &TruncatedIndexPmf) -> f64 {
    pmf.probs().iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_geometric_sums_to_one(ln_p in -11.5f64..0.0, s in 1usize..5000) {
        let d = TimeStepDistribution::geometric(ln_p.exp().min(1.0)).unwrap();
        let pmf = truncate_renormalize(&d, s).unwrap();
        prop_assert_eq!(pmf.support_size(), s);
        prop_assert!((total(&pmf) - 1.0).abs() < 1e-9);
        prop_assert!(pmf.probs().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn truncated_mixture_sums_to_one(w in 0.0f64..=1.0, r1 in 0.5f64..500.0, p1 in 1e-4f64..0.5,
                                     r2 in 0.5f64..500.0, p2 in 1e-4f64..0.5, s in 1usize..3000) {
        let d = TimeStepDistribution::mixture(w, NegativeBinomial { r: r1, p: p1 }, NegativeBinomial { r: r2, p: p2 }).unwrap();
        match truncate_renormalize(&d, s) {
            Ok(pmf) => prop_assert!((total(&pmf) - 1.0).abs() < 1e-9),
            Err(Error::DegenerateDistribution { support }) => prop_assert_eq!(support, s),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn offsets_and_starts_are_inverse(first in 1usize..50, len in 1usize..500, k in 0usize..500) {
        let range = StartRange { first, last: first + len - 1 };
        prop_assume!(k < len);
        let s = offset_to_start(k, range).unwrap();
        prop_assert!(range.contains(s));
        prop_assert_eq!(start_to_offset(s, range).unwrap(), k);
    }
}

#[test]
fn negbin_with_unit_r_is_geometric() {
    for p in [1e-5, 0.003, 0.2, 0.5, 0.9] {
        let g = TimeStepDistribution::geometric(p).unwrap();
        let nb = TimeStepDistribution::negative_binomial(1.0, p).unwrap();
        for k in (0..=10_000).step_by(7) {
            assert!((pmf_at(&g, k).unwrap() - pmf_at(&nb, k).unwrap()).abs() < 1e-12);
        }
        // the truncated tables go through the ratio recurrence
        let a = truncate_renormalize(&g, 10_001).unwrap();
        let b = truncate_renormalize(&nb, 10_001).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

/// Reference pmf from an independent implementation.
#[test]
fn negbin_table_matches_reference_pmf() {
    for (r, p) in [(0.5, 0.01), (3.7, 0.2), (40.0, 0.05), (250.0, 0.3)] {
        let support = 4000;
        let ours = truncate_renormalize(&TimeStepDistribution::negative_binomial(r, p).unwrap(), support).unwrap();
        let reference = statrs::distribution::NegativeBinomial::new(r, p).unwrap();
        let raw: Vec<f64> = (0..support as u64).map(|k| reference.pmf(k)).collect();
        let z: f64 = raw.iter().sum();
        for (k, (a, b)) in ours.probs().iter().zip(&raw).enumerate() {
            let b = b / z;
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12) + 1e-15, "r {r} p {p} k {k}: {a} vs {b}");
        }
    }
}

#[test]
fn degenerate_support_is_an_error() {
    // all mass far beyond the support
    let d = TimeStepDistribution::negative_binomial(500.0, 1e-4).unwrap();
    assert!(matches!(truncate_renormalize(&d, 3), Err(Error::DegenerateDistribution { support: 3 })));
    let sampler = DistributionSampler::new(d).unwrap();
    assert!(sampler.prepare([3]).is_err());
}

/// Chi-square and an expected-TV bound for seeded draws from random pmfs.
#[test]
fn sampler_matches_pmf() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 200_000usize;
    for i in 0..6 {
        let family = if i % 2 == 0 { Family::Geometric } else { Family::Mixnb2 };
        let support = rng.random_range(2..=256usize);
        let config = SearchSpace::for_family(family).sample(&mut rng);
        let Ok(pmf) = truncate_renormalize(&family.distribution(&config).unwrap(), support) else {
            continue;
        };
        let mut counts = vec![0usize; support];
        for _ in 0..n {
            counts[sample_offset(&pmf, &mut rng)] += 1;
        }
        let (stat, dof) = chi_square(&counts, pmf.probs(), n);
        let critical = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi-square {stat} >= {critical}");
        let tv: f64 = counts.iter().zip(pmf.probs()).map(|(c, p)| (*c as f64 / n as f64 - p).abs()).sum::<f64>() / 2.0;
        let expected: f64 = pmf
            .probs()
            .iter()
            .map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * n as f64)).sqrt())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1.5 * expected + 1e-3, "tv {tv} vs expected {expected}");
    }
}

/// Pearson statistic with bins pooled until each expects at least 5 draws.
fn chi_square(counts: &[usize], probs: &[f64], n: usize) -> (f64, usize) {
    let mut stat = 0.0;
    let mut bins = 0;
    let (mut obs, mut exp) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        obs += *c as f64;
        exp += p * n as f64;
        if exp >= 5.0 {
            stat += (obs - exp).powi(2) / exp;
            bins += 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        stat += (obs - exp).powi(2) / exp.max(1e-300);
        bins += 1;
    }
    (stat, bins.max(2) - 1)
}

#[test]
fn uniform_sampler_covers_range() {
    let sampler = DistributionSampler::uniform();
    let range = StartRange { first: 1, last: 7 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seen = [false; 7];
    for _ in 0..500 {
        let s = sampler.sample_start(range, &mut rng).unwrap();
        seen[s - 1] = true;
    }
    assert!(seen.iter().all(|s| *s));
}
