//! Truncated window-start distributions and how offsets map to starts.
//!
//!     cargo run --example distributions

use adasample::sampling::{
    offset_to_start, sample_offset, truncate_renormalize, NegativeBinomial, TimeStepDistribution,
};
use adasample::timeseries::valid_start_range;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adasample::Result<()> {
    // a series of 200 steps with 24 + 24 step windows
    let range = valid_start_range(200, 24, 24)?;
    println!("valid starts {}..={} ({} of them)", range.first, range.last, range.len());

    let geometric = TimeStepDistribution::geometric(0.05)?;
    let mixture = TimeStepDistribution::mixture(
        0.7,
        NegativeBinomial { r: 2.0, p: 0.2 },
        NegativeBinomial { r: 30.0, p: 0.3 },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (name, dist) in [("geometric(0.05)", &geometric), ("mixnb2", &mixture)] {
        let pmf = truncate_renormalize(dist, range.len())?;
        let head: Vec<String> = pmf.probs()[..5].iter().map(|p| format!("{p:.4}")).collect();
        println!("{name}: P(offset 0..5) = [{}]", head.join(", "));
        // offset 0 is the newest window
        let starts: Vec<usize> = (0..8).map(|_| offset_to_start(sample_offset(&pmf, &mut rng), range)).collect::<Result<_, _>>()?;
        println!("  sampled starts {starts:?}");
    }

    // all mass far past the support is rejected rather than renormalized
    let far = TimeStepDistribution::negative_binomial(500.0, 1e-4)?;
    println!("far tail on 3 offsets: {}", truncate_renormalize(&far, 3).unwrap_err());
    Ok(())
}
