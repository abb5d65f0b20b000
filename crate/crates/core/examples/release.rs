//! Minimal end-to-end release: generate data, pick the threshold, add noise.
//! This is the example from the README.

use histdp::clip::release_gaussian;
use histdp::data::{SizeLaw, SyntheticSpec};
use histdp::threshold::{exact_gaussian_threshold, noise_coefficient};
use histdp::{GeneratorKind, PrivacyParams, RandomSource};

fn main() -> histdp::Result<()> {
    // 1000 users over 20 items with heavy-tailed per-user activity.
    let spec = SyntheticSpec {
        generator: GeneratorKind::HeavyTail,
        n: 1000,
        d: 20,
        alpha: None,
        total_mass: None,
        size_law: Some(SizeLaw::Zipf { exponent: 2.0 }),
        seed: 7,
    };
    let (dataset, _) = spec.generate()?;

    // Pick the clipping threshold that minimizes the expected l1 error
    // surrogate for a (1.0, 1e-5)-DP Gaussian release.
    let budget = PrivacyParams::new(1.0, 1e-5)?;
    let m = noise_coefficient(dataset.domain(), &budget);
    let threshold = exact_gaussian_threshold(&dataset, m)?;

    // Release the histogram.
    let mut source = RandomSource::new(42);
    let release = release_gaussian(&dataset, threshold.c, &budget, &mut source)?;
    println!("C = {:.3}, first cell = {:.1}", threshold.c, release.values[0]);
    Ok(())
}
