//! Bias reduction for clipped Poisson counts.
//!
//! Clipping a count at `C` before release shifts its expectation from the
//! Poisson rate `λ` down to `E[min(Poi(λ), C)]`. That map is strictly
//! increasing in `λ`, so the shift can be undone: release the noisy clipped
//! sum, divide by `n`, and invert the map. This module implements the capped
//! Poisson mean, its derivatives, the inversion, the debiased release
//! itself, and evaluators for its mean-squared-error guarantee and for the
//! predicted improvement over the plain clipped estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, PrivacyParams};
use crate::noise::RandomSource;

fn check_rate(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("must be a nonnegative real, got {lambda}")));
    }
    Ok(())
}

fn check_clip(c: u32) -> Result<()> {
    if c == 0 {
        return Err(Error::invalid("c", "clip threshold must be a positive integer"));
    }
    Ok(())
}

/// `E[min(X, C)]` for `X ~ Poisson(lambda)`:
/// `C - sum_{j=0}^{C-1} (C - j) * e^{-lambda} lambda^j / j!`.
///
/// Strictly increasing and concave in `lambda`, with range `[0, C)`.
pub fn clipped_poisson_mean(lambda: f64, c: u32) -> Result<f64> {
    check_rate(lambda)?;
    check_clip(c)?;
    let mut pmf = (-lambda).exp();
    let mut shortfall = 0.0;
    for j in 0..c {
        shortfall += (c - j) as f64 * pmf;
        pmf *= lambda / (j + 1) as f64;
    }
    Ok(c as f64 - shortfall)
}

/// Derivative of [`clipped_poisson_mean`] in `lambda`:
/// `P[Poi(lambda) <= C-1]`, always in `(0, 1]`.
pub fn clipped_poisson_mean_slope(lambda: f64, c: u32) -> Result<f64> {
    check_rate(lambda)?;
    check_clip(c)?;
    let mut pmf = (-lambda).exp();
    let mut total = 0.0;
    for j in 0..c {
        total += pmf;
        pmf *= lambda / (j + 1) as f64;
    }
    Ok(total)
}

/// Second derivative of [`clipped_poisson_mean`] in `lambda`:
/// `-e^{-lambda} lambda^{C-1} / (C-1)!`, always nonpositive.
pub fn clipped_poisson_mean_curvature(lambda: f64, c: u32) -> Result<f64> {
    check_rate(lambda)?;
    check_clip(c)?;
    let mut pmf = (-lambda).exp();
    for j in 0..c - 1 {
        pmf *= lambda / (j + 1) as f64;
    }
    Ok(-pmf)
}

/// Inverts a continuous, strictly increasing function on `[0, inf)` by
/// safeguarded Newton iteration: Newton steps that leave the current
/// bracket, or hit a flat slope, fall back to bisection. Terminates when
/// `|f(x) - target|` drops below `tol`.
///
/// `hi_hint` seeds the upper bracket, which is doubled until it encloses the
/// target. The initial iterate is `target` itself (good when `f` is close to
/// the identity near zero, as the capped Poisson mean is).
pub fn invert_increasing<F, D>(f: F, slope: D, target: f64, hi_hint: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !target.is_finite() {
        return Err(Error::invalid("target", "must be finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let f0 = f(0.0);
    if target <= f0 {
        if f0 - target <= tol {
            return Ok(0.0);
        }
        return Err(Error::invalid("target", format!("below f(0) = {f0}")));
    }
    let mut hi = hi_hint.max(1e-12);
    let mut grow = 0;
    while f(hi) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 1100 {
            return Err(Error::invalid("target", "not reached by any finite argument"));
        }
    }
    let mut lo = 0.0;
    let mut x = target.clamp(lo, hi);
    for _ in 0..200 {
        let fx = f(x);
        if (fx - target).abs() <= tol {
            return Ok(x);
        }
        if fx < target {
            lo = x;
        } else {
            hi = x;
        }
        let d = slope(x);
        let newton = if d > 0.0 { x - (fx - target) / d } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// The unique `lambda >= 0` with `clipped_poisson_mean(lambda, c) = y`,
/// solved to absolute tolerance `1e-10` in `y`-space. `y` must lie in
/// `[0, C)`, the range of the mean map.
pub fn invert_clipped_poisson_mean(y: f64, c: u32) -> Result<f64> {
    check_clip(c)?;
    if !(y >= 0.0) || y >= c as f64 {
        return Err(Error::invalid("y", format!("must lie in [0, {c}), got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    invert_increasing(
        |l| clipped_poisson_mean(l, c).unwrap(),
        |l| clipped_poisson_mean_slope(l, c).unwrap(),
        y,
        y.max(1.0),
        1e-10,
    )
}

/// Worst-case amplification of estimation error by the inversion when all
/// rates are at most one: `1 / P[Poi(1) <= C-1]`, which is `e` at `C = 1`
/// and decreases toward 1.
pub fn debias_amplification(c: u32) -> Result<f64> {
    Ok(1.0 / clipped_poisson_mean_slope(1.0, c)?)
}

/// Clip-and-release setup for per-user counts of a single item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonClipModel {
    /// Integer clip threshold (the mean map assumes integrality).
    pub c: u32,
    /// Number of contributing users.
    pub n: usize,
    /// Release budget; the mechanism is `(epsilon, 0)`-DP.
    pub epsilon: f64,
    /// Clamp the estimated rate into `[0, 1]`. On by default; disable for
    /// regimes where the mean rate exceeds one.
    pub clamp_rate: bool,
}

impl PoissonClipModel {
    pub fn new(c: u32, n: usize, epsilon: f64) -> Result<Self> {
        check_clip(c)?;
        if n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(PoissonClipModel { c, n, epsilon, clamp_rate: true })
    }

    pub fn without_rate_clamp(mut self) -> Self {
        self.clamp_rate = false;
        self
    }
}

/// Result of a debiased release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasEstimate {
    /// Estimated total count across users (`n` times the unclamped rate).
    pub total_hat: f64,
    /// Estimated per-user rate, clamped per the model flag.
    pub rate_hat: f64,
    /// Noisy clipped mean fed to the inversion, after projection onto the
    /// mean map's range.
    pub clipped_mean: f64,
    /// Whether the rate clamp changed the estimate.
    pub clamped: bool,
    pub budget_spent: PrivacyParams,
}

/// Noisy clipped sum of one item's counts: `sum_i min(N_i, C) + Laplace(C/eps)`.
/// Divide by `n` to use as a (biased) rate estimate. Draws exactly one
/// Laplace variate from `source`.
pub fn clip_release_1d(
    counts: &[u64],
    c: f64,
    epsilon: f64,
    source: &mut RandomSource,
) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::InvalidDataset("empty count sequence".into()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("c", format!("must be positive, got {c}")));
    }
    let noise = source.sample_laplace(c / epsilon, 1)?[0];
    let clipped: f64 = counts.iter().map(|&x| (x as f64).min(c)).sum();
    Ok(clipped + noise)
}

/// Release the noisy clipped sum, then apply an arbitrary post-processing
/// map `g` (privacy is unaffected). The debiased release is this hook with
/// `g(y) = n * inverse-mean(y/n)`; other count models plug in their own `g`.
pub fn clip_release_then_map<G>(
    counts: &[u64],
    c: f64,
    epsilon: f64,
    g: G,
    source: &mut RandomSource,
) -> Result<f64>
where
    G: FnOnce(f64) -> f64,
{
    Ok(g(clip_release_1d(counts, c, epsilon, source)?))
}

/// Debiased count release: clips each count at `model.c`, releases the noisy
/// sum under `model.epsilon`, and inverts the clipped-Poisson mean map to
/// remove the clipping bias. Draws exactly one Laplace variate, so a clone
/// of `source` yields the identically-noised plain release for paired
/// comparisons.
pub fn debias_release(
    counts: &[u64],
    model: &PoissonClipModel,
    source: &mut RandomSource,
) -> Result<DebiasEstimate> {
    if counts.len() != model.n {
        return Err(Error::LengthMismatch { left: counts.len(), right: model.n });
    }
    let c = model.c;
    let y = clip_release_1d(counts, c as f64, model.epsilon, source)?;
    let n = model.n as f64;
    // Project the noisy mean onto the range of the mean map before inverting.
    let clipped_mean = (y / n).clamp(0.0, c as f64 - 1e-12);
    let rate_raw = invert_clipped_poisson_mean(clipped_mean, c)?;
    let (rate_hat, clamped) = if model.clamp_rate && rate_raw > 1.0 {
        (1.0, true)
    } else {
        (rate_raw, false)
    };
    Ok(DebiasEstimate {
        total_hat: n * rate_raw,
        rate_hat,
        clipped_mean,
        clamped,
        budget_spent: PrivacyParams { epsilon: model.epsilon, delta: 0.0 },
    })
}

fn ln_factorial(k: u32) -> f64 {
    (1..=k as u64).map(|i| (i as f64).ln()).sum()
}

/// Mean-squared-error guarantee of the debiased rate estimate when the mean
/// rate is at most one:
///
/// ```text
/// gamma_C^2 * ( C^2/(n eps)^2 + lambda_bar/n + coef * spread )
/// ```
///
/// where `spread` is the variance of the per-user rates. The spread
/// coefficient is `min{1, 1/(8 pi (C-1))}` in general (1 when `C = 1`), and
/// tightens to `1/(4 ((C-1)!)^2)` when every individual rate is at most one.
pub fn debias_mse_bound(
    lambda_bar: f64,
    spread: f64,
    c: u32,
    n: usize,
    epsilon: f64,
    all_rates_le_1: bool,
) -> Result<f64> {
    check_clip(c)?;
    if !(lambda_bar > 0.0) || lambda_bar > 1.0 {
        return Err(Error::invalid(
            "lambda_bar",
            format!("bound requires a mean rate in (0, 1], got {lambda_bar}"),
        ));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::invalid("spread", format!("must be nonnegative, got {spread}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    let gamma = debias_amplification(c)?;
    let nf = n as f64;
    let coef = if all_rates_le_1 {
        0.25 * (-2.0 * ln_factorial(c - 1)).exp()
    } else if c == 1 {
        1.0
    } else {
        (1.0 / (8.0 * std::f64::consts::PI * (c - 1) as f64)).min(1.0)
    };
    let cf = c as f64;
    Ok(gamma * gamma * (cf * cf / (nf * nf * epsilon * epsilon) + lambda_bar / nf + coef * spread))
}

/// Predicted mean-squared-error improvement of the debiased estimator over
/// the plain clipped one, from the rate profile alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippingGapReport {
    /// Mean of the per-user rates.
    pub lambda_bar: f64,
    /// Variance of the per-user rates.
    pub spread: f64,
    /// Mean of the clipped-Poisson means of the per-user rates.
    pub h_bar: f64,
    /// Error amplification of the inversion, `>= 1`.
    pub amplification: f64,
    /// Position of `h_bar` between the degenerate extreme `h_min` (0) and
    /// the i.i.d. extreme (1).
    pub alpha: f64,
    /// Smallest `h_bar` the prediction covers.
    pub h_min: f64,
    /// Leading term of the predicted mean-squared-error gap (an `O(1/n)`
    /// remainder is not included).
    pub predicted_gap: f64,
}

/// Evaluates the predicted clipped-vs-debiased gap for a rate profile.
/// Requires `h_bar >= h_min`; below that the prediction's hypothesis fails.
pub fn predict_debias_gap(rates: &[f64], c: u32) -> Result<ClippingGapReport> {
    check_clip(c)?;
    if rates.is_empty() {
        return Err(Error::InvalidDataset("empty rate sequence".into()));
    }
    for &r in rates {
        check_rate(r)?;
    }
    let n = rates.len() as f64;
    let lambda_bar = rates.iter().sum::<f64>() / n;
    if lambda_bar <= 0.0 {
        return Err(Error::invalid("rates", "must have a positive mean"));
    }
    let spread = rates.iter().map(|&r| (r - lambda_bar).powi(2)).sum::<f64>() / n;
    let mut h_bar = 0.0;
    for &r in rates {
        h_bar += clipped_poisson_mean(r, c)?;
    }
    h_bar /= n;
    let gamma = debias_amplification(c)?;
    let h_at_mean = clipped_poisson_mean(lambda_bar, c)?;
    let shortfall = lambda_bar - h_at_mean;
    let h_min = h_at_mean - shortfall / (gamma - 1.0);
    // By concavity h_bar <= h(lambda_bar), so alpha <= 1; the hypothesis
    // h_bar >= h_min keeps it nonnegative.
    let alpha = 1.0 + (h_bar - h_at_mean) * (gamma - 1.0) / shortfall;
    if alpha < -1e-12 {
        return Err(Error::Hypothesis(format!(
            "mean clipped rate {h_bar} is below the covered minimum {h_min}"
        )));
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let predicted_gap =
        alpha * (2.0 * gamma - (gamma + 1.0) * alpha) / (gamma - 1.0) * shortfall * shortfall;
    Ok(ClippingGapReport {
        lambda_bar,
        spread,
        h_bar,
        amplification: gamma,
        alpha,
        h_min,
        predicted_gap,
    })
}

/// Suggested integer clip threshold from the rate spread: grows like
/// `(n * spread)^{2/3}` in general, and only logarithmically when every
/// rate is at most one.
pub fn suggest_debias_threshold(spread: f64, n: usize, all_rates_le_1: bool) -> Result<u32> {
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::invalid("spread", format!("must be nonnegative, got {spread}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let x = n as f64 * spread;
    let suggestion = if all_rates_le_1 {
        (1.0 + (1.0 + x).ln()).ceil()
    } else {
        x.powf(2.0 / 3.0).ceil() + 1.0
    };
    Ok((suggestion as u32).max(1))
}

/// Per-item budget for debiasing every item of a `d`-dimensional histogram
/// under an overall `(epsilon, delta)` guarantee:
/// `epsilon / (2 sqrt(2 d ln(1/delta)))`, the strong-composition rate.
pub fn per_symbol_epsilon(d: usize, budget: &PrivacyParams) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    if budget.delta <= 0.0 {
        return Err(Error::invalid("budget", "per-symbol composition requires delta > 0"));
    }
    Ok(budget.epsilon / (2.0 * (2.0 * d as f64 * (1.0 / budget.delta).ln()).sqrt()))
}

/// Debias every item of a histogram dataset independently, splitting the
/// overall budget across items by strong composition. Returns one estimate
/// per item of the domain.
pub fn debias_release_per_symbol(
    dataset: &Dataset,
    c: u32,
    budget: &PrivacyParams,
    source: &mut RandomSource,
) -> Result<Vec<DebiasEstimate>> {
    let eps0 = per_symbol_epsilon(dataset.domain(), budget)?;
    let model = PoissonClipModel::new(c, dataset.len(), eps0)?;
    (0..dataset.domain())
        .map(|item| {
            let counts: Vec<u64> = dataset.users().iter().map(|u| u.get(item)).collect();
            debias_release(&counts, &model, source)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    const E: f64 = std::f64::consts::E;

    /// Independent oracle: E[min(X, c)] by direct pmf summation far into
    /// the tail.
    fn brute_force_mean(lambda: f64, c: u32, j_max: u32) -> f64 {
        let mut pmf = (-lambda).exp();
        let mut total = 0.0;
        for j in 0..=j_max {
            total += j.min(c) as f64 * pmf;
            pmf *= lambda / (j + 1) as f64;
        }
        total
    }

    fn poisson_counts(rates: &[f64], src: &mut RandomSource) -> Vec<u64> {
        rates
            .iter()
            .map(|&l| {
                if l > 0.0 {
                    Poisson::new(l).unwrap().sample(src) as u64
                } else {
                    0
                }
            })
            .collect()
    }

    #[test]
    fn clipped_mean_known_values() {
        assert_abs_diff_eq!(
            clipped_poisson_mean(1.0, 1).unwrap(),
            1.0 - 1.0 / E,
            epsilon = 1e-14
        );
        for c in [1, 2, 5, 40] {
            assert_eq!(clipped_poisson_mean(0.0, c).unwrap(), 0.0);
        }
        // Brute-force oracle summed to j = 200.
        assert_abs_diff_eq!(
            clipped_poisson_mean(1.0, 2).unwrap(),
            brute_force_mean(1.0, 2, 200),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(clipped_poisson_mean(1.0, 2).unwrap(), 2.0 - 3.0 / E, epsilon = 1e-14);
        // Saturation: the cap dominates for large rates.
        assert_abs_diff_eq!(clipped_poisson_mean(30.0, 2).unwrap(), 2.0, epsilon = 1e-9);
        assert!(clipped_poisson_mean(-0.1, 2).is_err());
        assert!(clipped_poisson_mean(1.0, 0).is_err());
    }

    #[test]
    fn clipped_mean_matches_brute_force_on_grid() {
        for &lambda in &[0.05f64, 0.5, 1.0, 2.5, 7.0, 13.3, 20.0] {
            let j_max = (lambda + 40.0 * lambda.sqrt() + 40.0).ceil() as u32;
            for c in 1..=20 {
                let fast = clipped_poisson_mean(lambda, c).unwrap();
                let brute = brute_force_mean(lambda, c, j_max);
                assert!(
                    (fast - brute).abs() <= 1e-10,
                    "lambda={lambda}, c={c}: {fast} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn clipped_mean_increasing_concave_and_dominated() {
        for c in [1u32, 2, 3, 7, 15] {
            let mut prev = -1.0;
            let mut prev_delta = f64::INFINITY;
            for k in 0..=400 {
                let lambda = k as f64 * 0.05;
                let h = clipped_poisson_mean(lambda, c).unwrap();
                assert!(h <= lambda + 1e-12, "h > lambda at {lambda}, c={c}");
                assert!(h <= c as f64);
                assert!(h > prev || (k == 0 && h == 0.0), "not increasing at {lambda}, c={c}");
                let delta = h - prev;
                if k >= 2 {
                    assert!(delta <= prev_delta + 1e-12, "not concave at {lambda}, c={c}");
                }
                prev = h;
                prev_delta = delta;
            }
        }
    }

    #[test]
    fn slope_matches_central_differences() {
        for c in 1..=20 {
            assert_eq!(clipped_poisson_mean_slope(0.0, c).unwrap(), 1.0);
            for &lambda in &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
                let d = 1e-4;
                let numeric = (clipped_poisson_mean(lambda + d, c).unwrap()
                    - clipped_poisson_mean(lambda - d, c).unwrap())
                    / (2.0 * d);
                let exact = clipped_poisson_mean_slope(lambda, c).unwrap();
                assert!(
                    (numeric - exact).abs() <= 1e-6,
                    "lambda={lambda}, c={c}: {exact} vs numeric {numeric}"
                );
                assert!(exact > 0.0 && exact <= 1.0);
            }
        }
        // Single-term case: the slope is the empty-count probability.
        assert_abs_diff_eq!(clipped_poisson_mean_slope(1.7, 1).unwrap(), (-1.7f64).exp());
    }

    #[test]
    fn curvature_known_values_and_peak_bound() {
        assert_eq!(clipped_poisson_mean_curvature(0.0, 1).unwrap(), -1.0);
        assert_eq!(clipped_poisson_mean_curvature(0.0, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(
            clipped_poisson_mean_curvature(1.0, 2).unwrap(),
            -1.0 / E,
            epsilon = 1e-14
        );
        // Second-order finite differences of the mean.
        for &(lambda, c) in &[(0.7, 1u32), (1.3, 3), (4.0, 5)] {
            let d = 1e-4;
            let numeric = (clipped_poisson_mean(lambda + d, c).unwrap()
                - 2.0 * clipped_poisson_mean(lambda, c).unwrap()
                + clipped_poisson_mean(lambda - d, c).unwrap())
                / (d * d);
            let exact = clipped_poisson_mean_curvature(lambda, c).unwrap();
            assert!((numeric - exact).abs() <= 1e-5);
        }
        // Peak magnitude for c = 5 stays under the Stirling bound 1/sqrt(8 pi).
        let bound = 1.0 / (8.0 * std::f64::consts::PI).sqrt();
        let peak = (0..=2000)
            .map(|k| clipped_poisson_mean_curvature(k as f64 * 0.01, 5).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(peak <= bound, "peak {peak} above {bound}");
        assert!(peak > 0.9 * bound, "grid peak {peak} suspiciously far from {bound}");
    }

    #[test]
    fn inversion_round_trips() {
        assert_eq!(invert_clipped_poisson_mean(0.0, 3).unwrap(), 0.0);
        // c = 1 has the closed form -ln(1 - y).
        let y = 1.0 - 1.0 / E;
        assert_abs_diff_eq!(invert_clipped_poisson_mean(y, 1).unwrap(), 1.0, epsilon = 1e-9);
        let mut src = RandomSource::new(7);
        for _ in 0..1000 {
            let c = src.gen_range(1..=50u32);
            let y = src.gen::<f64>() * (c as f64 - 1e-9);
            let lambda = invert_clipped_poisson_mean(y, c).unwrap();
            let back = clipped_poisson_mean(lambda, c).unwrap();
            assert!((back - y).abs() <= 1e-9, "c={c}, y={y}: lambda={lambda}, back={back}");
        }
        assert!(invert_clipped_poisson_mean(-0.1, 2).is_err());
        assert!(invert_clipped_poisson_mean(2.0, 2).is_err());
    }

    #[test]
    fn generic_inversion_handles_other_maps() {
        // x^3 on [0, inf).
        let root = invert_increasing(|x| x * x * x, |x| 3.0 * x * x, 27.0, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(root, 3.0, epsilon = 1e-9);
        // Saturating map never reaches 2.
        assert!(invert_increasing(|x| 1.0 - (-x).exp(), |x| (-x).exp(), 2.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn amplification_values_and_bound() {
        assert_abs_diff_eq!(debias_amplification(1).unwrap(), E, epsilon = 1e-14);
        assert_abs_diff_eq!(debias_amplification(2).unwrap(), E / 2.0, epsilon = 1e-14);
        let mut prev = f64::INFINITY;
        for c in 1..=50u32 {
            let g = debias_amplification(c).unwrap();
            // Strictly decreasing until the Poisson(1) cdf saturates to 1.0
            // in double precision, nonincreasing after.
            assert!(g >= 1.0 && g <= prev, "increasing at c={c}");
            if c <= 15 {
                assert!(g < prev, "not strictly decreasing at c={c}");
            }
            let cf = c as f64;
            let stated = E.max(1.0 / (1.0 - (-(cf - 1.0).powi(2) / (2.0 * cf)).exp()));
            assert!(g <= stated, "c={c}: {g} above stated bound {stated}");
            prev = g;
        }
        assert!((debias_amplification(50).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn debias_release_trivial_and_boundary() {
        let model = PoissonClipModel::new(1, 1, 1e15).unwrap();
        let mut src = RandomSource::new(0);
        let est = debias_release(&[0], &model, &mut src).unwrap();
        assert_eq!(est.total_hat, 0.0);
        assert_eq!(est.rate_hat, 0.0);
        assert!(!est.clamped);
        assert_eq!(est.budget_spent, PrivacyParams { epsilon: 1e15, delta: 0.0 });

        // Saturated counts with wild noise: the range projection keeps the
        // inversion finite and the rate clamp caps the estimate.
        let model = PoissonClipModel::new(1, 2, 0.01).unwrap();
        for seed in 0..20 {
            let mut src = RandomSource::new(seed);
            let est = debias_release(&[10, 10], &model, &mut src).unwrap();
            assert!(est.rate_hat.is_finite() && (0.0..=1.0).contains(&est.rate_hat));
            assert!(est.total_hat.is_finite());
        }

        assert!(debias_release(&[], &PoissonClipModel::new(1, 1, 1.0).unwrap(), &mut src).is_err());
        assert!(debias_release(&[1, 2], &PoissonClipModel::new(1, 3, 1.0).unwrap(), &mut src).is_err());
    }

    #[test]
    fn debias_release_centers_on_true_rate() {
        // i.i.d. rate-1 counts: the clipped mean sits near 0.896, the
        // debiased rate near 1.
        let n = 100_000;
        let rates = vec![1.0; n];
        let model = PoissonClipModel::new(2, n, 1.0).unwrap();
        let mut src = RandomSource::new(42);
        let mut mean_rate = 0.0;
        let mut mean_clipped = 0.0;
        let trials = 100;
        for _ in 0..trials {
            let counts = poisson_counts(&rates, &mut src);
            let est = debias_release(&counts, &model, &mut src).unwrap();
            mean_rate += est.rate_hat;
            mean_clipped += est.clipped_mean;
        }
        mean_rate /= trials as f64;
        mean_clipped /= trials as f64;
        assert!((mean_rate - 1.0).abs() <= 0.01, "debiased mean {mean_rate}");
        let h1 = clipped_poisson_mean(1.0, 2).unwrap();
        assert!(
            (mean_clipped - h1).abs() <= 0.01,
            "clipped mean {mean_clipped} vs {h1}"
        );
    }

    #[test]
    fn rate_clamp_flag_is_honored() {
        // Counts with mean rate 3 and a huge threshold: unclamped recovers
        // about 3, clamped caps at 1.
        let n = 2000;
        let rates = vec![3.0; n];
        let mut src = RandomSource::new(5);
        let counts = poisson_counts(&rates, &mut src);
        let clamped_model = PoissonClipModel::new(50, n, 1e9).unwrap();
        let open_model = clamped_model.without_rate_clamp();
        let est = debias_release(&counts, &clamped_model, &mut src.substream(1)).unwrap();
        assert_eq!(est.rate_hat, 1.0);
        assert!(est.clamped);
        let est = debias_release(&counts, &open_model, &mut src.substream(1)).unwrap();
        assert!((est.rate_hat - 3.0).abs() < 0.15, "unclamped rate {}", est.rate_hat);
        assert!(!est.clamped);
    }

    #[test]
    fn clip_release_arithmetic_and_noiseless_mean() {
        let mut src = RandomSource::new(1);
        let y = clip_release_1d(&[5, 5], 2.0, 1e15, &mut src).unwrap();
        assert_abs_diff_eq!(y, 4.0, epsilon = 1e-9);
        let y = clip_release_1d(&[1, 2, 3], 10.0, 1e15, &mut src).unwrap();
        assert_abs_diff_eq!(y / 3.0, 2.0, epsilon = 1e-9);
        assert!(clip_release_1d(&[], 2.0, 1.0, &mut src).is_err());
        assert!(clip_release_1d(&[1], 0.0, 1.0, &mut src).is_err());
    }

    #[test]
    fn clip_release_variance_decomposes() {
        // Var[y] = sum Var[min(N_i, C)] + 2 C^2 / eps^2.
        let n = 40;
        let lambda = 0.8f64;
        let c = 3u32;
        let epsilon = 1.0;
        // Analytic clipped variance from the pmf.
        let j_max = 60;
        let mut pmf = (-lambda).exp();
        let (mut m1, mut m2) = (0.0, 0.0);
        for j in 0..=j_max {
            let v = (j as u32).min(c) as f64;
            m1 += v * pmf;
            m2 += v * v * pmf;
            pmf *= lambda / (j + 1) as f64;
        }
        let var_user = m2 - m1 * m1;
        let expected = n as f64 * var_user + 2.0 * (c as f64 / epsilon).powi(2);

        let rates = vec![lambda; n];
        let mut src = RandomSource::new(9);
        let trials = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..trials {
            let counts = poisson_counts(&rates, &mut src);
            let y = clip_release_1d(&counts, c as f64, epsilon, &mut src).unwrap();
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        assert!(
            (var - expected).abs() / expected <= 0.05,
            "variance {var} vs analytic {expected}"
        );
    }

    #[test]
    fn post_map_hook_applies_after_release() {
        let mut a = RandomSource::new(11);
        let mut b = a.clone();
        let plain = clip_release_1d(&[3, 1, 4], 2.0, 0.5, &mut a).unwrap();
        let mapped = clip_release_then_map(&[3, 1, 4], 2.0, 0.5, |y| 2.0 * y + 1.0, &mut b).unwrap();
        assert_eq!(mapped, 2.0 * plain + 1.0);
    }

    #[test]
    fn mse_bound_plug_in_values() {
        // C=2, n=1e4, eps=1, mean rate 1, no spread.
        let bound = debias_mse_bound(1.0, 0.0, 2, 10_000, 1.0, true).unwrap();
        let gamma2 = (E / 2.0) * (E / 2.0);
        assert_abs_diff_eq!(bound, gamma2 * (4e-8 + 1e-4), epsilon = 1e-15);
        assert!((bound - 1.848e-4).abs() < 1e-6);

        // All error sources vanish in the large-n, large-eps limit.
        let tiny = debias_mse_bound(1.0, 0.0, 2, usize::MAX, 1e9, true).unwrap();
        assert!(tiny < 1e-18);

        // Spread coefficients: general vs all-rates-bounded.
        let c = 4u32;
        let general = debias_mse_bound(0.5, 1.0, c, 10, 1.0, false).unwrap();
        let bounded = debias_mse_bound(0.5, 1.0, c, 10, 1.0, true).unwrap();
        let gamma = debias_amplification(c).unwrap();
        let base = gamma * gamma * (16.0 / 100.0 + 0.05);
        assert_abs_diff_eq!(
            general - base,
            gamma * gamma / (8.0 * std::f64::consts::PI * 3.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(bounded - base, gamma * gamma / (4.0 * 36.0), epsilon = 1e-12);
        // C = 1 uses coefficient 1 in the general form and 1/4 in the
        // bounded form.
        let g1 = debias_mse_bound(0.5, 1.0, 1, 10, 1.0, false).unwrap();
        let b1 = debias_mse_bound(0.5, 1.0, 1, 10, 1.0, true).unwrap();
        let base1 = E * E * (1.0 / 100.0 + 0.05);
        assert_abs_diff_eq!(g1 - base1, E * E, epsilon = 1e-12);
        assert_abs_diff_eq!(b1 - base1, E * E / 4.0, epsilon = 1e-12);

        assert!(debias_mse_bound(1.2, 0.0, 2, 10, 1.0, true).is_err());
        assert!(debias_mse_bound(0.0, 0.0, 2, 10, 1.0, true).is_err());
    }

    #[test]
    fn gap_prediction_iid_and_mixture() {
        // Identical rates: alpha = 1 and the factor collapses to 1, leaving
        // the squared clipping shortfall.
        let report = predict_debias_gap(&[1.0; 8], 2).unwrap();
        assert_abs_diff_eq!(report.alpha, 1.0, epsilon = 1e-12);
        let shortfall = 1.0 - (2.0 - 3.0 / E);
        assert_abs_diff_eq!(report.predicted_gap, shortfall * shortfall, epsilon = 1e-12);
        assert_abs_diff_eq!(report.lambda_bar, 1.0);
        assert_eq!(report.spread, 0.0);

        // Two-point mixture at {0, 2}: the worked case with a first term
        // just above 0.0217.
        let mut rates = vec![0.0; 500];
        rates.extend(vec![2.0; 500]);
        let report = predict_debias_gap(&rates, 2).unwrap();
        let h2 = clipped_poisson_mean(2.0, 2).unwrap();
        assert_abs_diff_eq!(report.h_bar, h2 / 2.0, epsilon = 1e-12);
        assert!(report.h_bar >= 0.729 && report.h_bar <= 0.730);
        // Interpolation coefficient recomputed from the definition.
        let h1 = 2.0 - 3.0 / E;
        let expected_alpha = 1.0 + (h2 / 2.0 - h1) * (E / 2.0 - 1.0) / (1.0 - h1);
        assert_abs_diff_eq!(report.alpha, expected_alpha, epsilon = 1e-12);
        assert!((report.alpha - 0.42118).abs() < 1e-5, "alpha {}", report.alpha);
        assert!(
            report.predicted_gap >= 0.0217 && report.predicted_gap <= 0.0218,
            "gap {}",
            report.predicted_gap
        );
        assert_abs_diff_eq!(
            report.h_min,
            clipped_poisson_mean(1.0, 2).unwrap()
                - (1.0 - clipped_poisson_mean(1.0, 2).unwrap()) / (E / 2.0 - 1.0),
            epsilon = 1e-12
        );

        // Profile whose mean clipped rate falls below the covered minimum.
        let out = predict_debias_gap(&[0.0, 0.0, 0.0, 4.0], 2);
        assert!(matches!(out, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn measured_gap_beats_prediction() {
        // Mixture rates {0, 2}, paired noise between the two estimators.
        let n = 20_000;
        let c = 2u32;
        let epsilon = 1.0;
        let mut rates = vec![0.0; n / 2];
        rates.extend(vec![2.0; n / 2]);
        let report = predict_debias_gap(&rates, c).unwrap();
        let model = PoissonClipModel::new(c, n, epsilon).unwrap();
        let lambda_bar = report.lambda_bar;
        let mut src = RandomSource::new(77);
        let trials = 300;
        let (mut mse_clip, mut mse_debias) = (0.0, 0.0);
        for _ in 0..trials {
            let counts = poisson_counts(&rates, &mut src);
            let mut paired = src.clone();
            let y = clip_release_1d(&counts, c as f64, epsilon, &mut src).unwrap();
            let est = debias_release(&counts, &model, &mut paired).unwrap();
            mse_clip += (y / n as f64 - lambda_bar).powi(2);
            mse_debias += (est.rate_hat - lambda_bar).powi(2);
        }
        mse_clip /= trials as f64;
        mse_debias /= trials as f64;
        let measured = mse_clip - mse_debias;
        assert!(
            measured >= report.predicted_gap - 5.0 / n as f64,
            "measured {measured} vs predicted {} - slack",
            report.predicted_gap
        );
    }

    #[test]
    fn threshold_suggestions() {
        assert_eq!(suggest_debias_threshold(0.0, 5, false).unwrap(), 1);
        assert_eq!(suggest_debias_threshold(0.0, 5, true).unwrap(), 1);
        // n * spread = 1000.
        assert_eq!(suggest_debias_threshold(0.1, 10_000, false).unwrap(), 101);
        assert_eq!(suggest_debias_threshold(0.1, 10_000, true).unwrap(), 8);
        assert!(suggest_debias_threshold(-1.0, 5, false).is_err());
    }

    #[test]
    fn per_symbol_budget_and_composite() {
        let budget = PrivacyParams::new(1.0, 1e-6).unwrap();
        let eps0 = per_symbol_epsilon(4, &budget).unwrap();
        assert_abs_diff_eq!(
            eps0,
            1.0 / (2.0 * (8.0 * (1e6f64).ln()).sqrt()),
            epsilon = 1e-15
        );
        assert!(per_symbol_epsilon(0, &budget).is_err());
        assert!(per_symbol_epsilon(2, &PrivacyParams::pure(1.0).unwrap()).is_err());

        // Two-item histograms, effectively noiseless: each item's rate is
        // recovered independently.
        use crate::model::UserHistogram;
        let users = vec![
            UserHistogram::new(2, [(0, 1u64)]).unwrap(),
            UserHistogram::new(2, [(0, 2), (1, 1)]).unwrap(),
            UserHistogram::new(2, [(1, 1)]).unwrap(),
        ];
        let dataset = Dataset::new(users).unwrap();
        let huge = PrivacyParams::new(1e12, 1e-6).unwrap();
        let mut src = RandomSource::new(3);
        let ests = debias_release_per_symbol(&dataset, 30, &huge, &mut src).unwrap();
        assert_eq!(ests.len(), 2);
        assert_abs_diff_eq!(ests[0].rate_hat, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(ests[1].rate_hat, 2.0 / 3.0, epsilon = 1e-6);
    }
}
