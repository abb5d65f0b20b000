//! Contribution clipping and the two private release mechanisms.
//!
//! Clipping rescales a user's histogram onto the norm ball of radius `C`:
//! `clip(x, C) = x * C / max(C, ||x||)`. Under user-level (replacement)
//! neighbors the clipped sum then moves by at most `2C` in the clipping
//! norm, which calibrates the per-coordinate noise.

use crate::error::{Error, Result};
use crate::model::{Dataset, NoiseKind, NoisyEstimate, PrivacyParams, UserHistogram};
use crate::noise::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipNorm {
    L1,
    L2,
}

impl ClipNorm {
    fn of(&self, hist: &UserHistogram) -> f64 {
        match self {
            ClipNorm::L1 => hist.l1(),
            ClipNorm::L2 => hist.l2(),
        }
    }
}

fn check_threshold(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("c", format!("clipping threshold must be positive, got {c}")));
    }
    Ok(())
}

/// Scale factor `C / max(C, ||x||)`; exactly 1 when the histogram already
/// fits inside the ball, so unclipped users are passed through unchanged.
fn clip_scale(hist: &UserHistogram, c: f64, norm: ClipNorm) -> f64 {
    let n = norm.of(hist);
    if n <= c {
        1.0
    } else {
        c / n
    }
}

/// Dense clipped copy of one user's histogram.
pub fn clip(hist: &UserHistogram, c: f64, norm: ClipNorm) -> Result<Vec<f64>> {
    check_threshold(c)?;
    let scale = clip_scale(hist, c, norm);
    let mut out = vec![0.0; hist.domain()];
    for (item, count) in hist.entries() {
        out[item] = scale * count as f64;
    }
    Ok(out)
}

/// Sum of clipped user histograms, accumulated sparsely.
fn clipped_sum(dataset: &Dataset, c: f64, norm: ClipNorm) -> Vec<f64> {
    let mut acc = vec![0.0; dataset.domain()];
    for user in dataset.users() {
        let scale = clip_scale(user, c, norm);
        for (item, count) in user.entries() {
            acc[item] += scale * count as f64;
        }
    }
    acc
}

/// l1-clipped aggregate plus per-coordinate Laplace(C/epsilon) noise.
/// Pure DP: rejects budgets with `delta != 0`.
pub fn release_laplace(
    dataset: &Dataset,
    c: f64,
    budget: &PrivacyParams,
    source: &mut RandomSource,
) -> Result<NoisyEstimate> {
    check_threshold(c)?;
    if !budget.is_pure() {
        return Err(Error::invalid(
            "budget",
            format!("laplace release is pure-DP; delta must be 0, got {}", budget.delta),
        ));
    }
    let mut values = clipped_sum(dataset, c, ClipNorm::L1);
    let scale = c / budget.epsilon;
    for (v, z) in values.iter_mut().zip(source.sample_laplace(scale, dataset.domain())?) {
        *v += z;
    }
    Ok(NoisyEstimate {
        values,
        threshold: c,
        noise: NoiseKind::Laplace,
        noise_scale: scale,
        budget_spent: *budget,
        seed: source.seed(),
        warnings: Vec::new(),
    })
}

/// Per-coordinate standard deviation of the Gaussian release,
/// `sigma = C * sqrt(2 ln(1.32/delta)) / epsilon`.
pub fn gaussian_sigma(c: f64, budget: &PrivacyParams) -> f64 {
    c * (2.0 * (1.32 / budget.delta).ln()).sqrt() / budget.epsilon
}

/// l2-clipped aggregate plus per-coordinate Gaussian noise with
/// [`gaussian_sigma`]. Requires `delta > 0`; epsilon above 1 is allowed but
/// recorded as a warning because the calibration constant is tuned for the
/// high-privacy regime.
pub fn release_gaussian(
    dataset: &Dataset,
    c: f64,
    budget: &PrivacyParams,
    source: &mut RandomSource,
) -> Result<NoisyEstimate> {
    check_threshold(c)?;
    if budget.is_pure() {
        return Err(Error::invalid("budget", "gaussian release requires delta > 0"));
    }
    let mut warnings = Vec::new();
    if budget.epsilon > 1.0 {
        warnings.push(format!(
            "gaussian calibration assumes epsilon <= 1, got {}",
            budget.epsilon
        ));
    }
    let mut values = clipped_sum(dataset, c, ClipNorm::L2);
    let sigma = gaussian_sigma(c, budget);
    for (v, z) in values.iter_mut().zip(source.sample_gaussian(sigma, dataset.domain())?) {
        *v += z;
    }
    Ok(NoisyEstimate {
        values,
        threshold: c,
        noise: NoiseKind::Gaussian,
        noise_scale: sigma,
        budget_spent: *budget,
        seed: source.seed(),
        warnings,
    })
}
