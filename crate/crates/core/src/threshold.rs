//! Clipping-threshold selection.
//!
//! The Gaussian release at threshold `C` pays a clipping bias of
//! `f_i(C) = max(1 - C/||N_i||_2, 0) * ||N_i||_1` per user and an expected
//! noise mass of `C * M`, where `M` is the [`noise_coefficient`] determined
//! by the budget and dimension. Their sum
//!
//! ```text
//! G(C) = sum_i f_i(C) + C * M
//! ```
//!
//! is a convex piecewise-linear surrogate whose minimizer is within a factor
//! two of the best threshold in hindsight. This module provides the exact
//! (non-private) minimizer, the quantile rule for the Laplace mechanism, and
//! three private estimators: a DP quantile tracker, DP-SGD on the surrogate,
//! and output perturbation of a regularized exact minimizer.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, PrivacyParams};
use crate::noise::RandomSource;

/// Noise-mass coefficient of the Gaussian release,
/// `M = 2 sqrt(ln(1.32/delta)/pi) * d / epsilon`: the expected l1 norm of the
/// release noise at threshold `C` is exactly `C * M`.
pub fn noise_coefficient(d: usize, budget: &PrivacyParams) -> f64 {
    2.0 * ((1.32 / budget.delta).ln() / std::f64::consts::PI).sqrt() * d as f64 / budget.epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMethod {
    /// Exact surrogate minimizer (non-private baseline).
    ExactGaussian,
    /// Top-ceil(d/epsilon) contribution size (non-private rule for the
    /// Laplace mechanism).
    LaplaceQuantile,
    /// Private quantile tracker targeting rank `M` from above.
    DpQuantile,
    /// Private SGD on the surrogate loss.
    DpSgd,
    /// Regularized exact minimizer plus calibrated output noise.
    OutputPerturbation,
}

impl ThresholdMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ThresholdMethod::ExactGaussian => "exact",
            ThresholdMethod::LaplaceQuantile => "laplace-quantile",
            ThresholdMethod::DpQuantile => "dp-quantile",
            ThresholdMethod::DpSgd => "dpsgd",
            ThresholdMethod::OutputPerturbation => "output-perturb",
        }
    }
}

impl std::fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A selected clipping threshold plus the budget the selection consumed and
/// method-specific diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub c: f64,
    pub method: ThresholdMethod,
    /// Budget actually charged by the selection (zero for the non-private
    /// methods).
    pub budget_spent: PrivacyParams,
    pub diagnostics: BTreeMap<String, f64>,
}

impl ThresholdEstimate {
    fn new(c: f64, method: ThresholdMethod, budget_spent: PrivacyParams) -> Self {
        ThresholdEstimate { c, method, budget_spent, diagnostics: BTreeMap::new() }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// One user's contribution to the surrogate: the norm pair, with the
/// l1 mass optionally capped so the slope `l1/l2` never exceeds `sqrt(s)`.
#[derive(Debug, Clone, Copy)]
struct LossTerm {
    l2: f64,
    l1: f64,
    /// Slope magnitude `l1 / l2` of `f_i` left of its breakpoint.
    ratio: f64,
}

/// Precomputed per-dataset surrogate loss `G(C) = sum_i f_i(C) + C * M`.
#[derive(Debug, Clone)]
pub struct SurrogateLoss {
    /// Terms for users with a nonempty histogram, sorted by `l2` ascending.
    terms: Vec<LossTerm>,
    /// All users, including empty ones (the `1/n` normalizer of `F`).
    n: usize,
    noise_mass: f64,
}

impl SurrogateLoss {
    /// Surrogate with the raw per-user slopes (the exact, non-private form).
    pub fn new(dataset: &Dataset, noise_mass: f64) -> Result<Self> {
        Self::build(dataset, noise_mass, None)
    }

    /// Surrogate with every slope `||N_i||_1 / ||N_i||_2` capped at
    /// `sqrt(sparsity)`, the form whose sensitivity the private estimators
    /// rely on. Biased when users exceed the sparsity assumption.
    pub fn with_ratio_cap(dataset: &Dataset, noise_mass: f64, sparsity: f64) -> Result<Self> {
        if !(sparsity >= 1.0) || !sparsity.is_finite() {
            return Err(Error::invalid("sparsity", format!("must be >= 1, got {sparsity}")));
        }
        Self::build(dataset, noise_mass, Some(sparsity.sqrt()))
    }

    fn build(dataset: &Dataset, noise_mass: f64, ratio_cap: Option<f64>) -> Result<Self> {
        if !(noise_mass > 0.0) || !noise_mass.is_finite() {
            return Err(Error::invalid("noise_mass", format!("must be positive, got {noise_mass}")));
        }
        let mut terms: Vec<LossTerm> = dataset
            .users()
            .iter()
            .filter(|u| u.l2() > 0.0)
            .map(|u| {
                let raw = u.l1() / u.l2();
                let ratio = match ratio_cap {
                    Some(cap) => raw.min(cap),
                    None => raw,
                };
                // Capping the slope is equivalent to shrinking the l1 mass.
                LossTerm { l2: u.l2(), l1: ratio * u.l2(), ratio }
            })
            .collect();
        terms.sort_by(|a, b| a.l2.partial_cmp(&b.l2).unwrap());
        Ok(SurrogateLoss { terms, n: dataset.len(), noise_mass })
    }

    pub fn noise_mass(&self) -> f64 {
        self.noise_mass
    }

    /// `G(C)`.
    pub fn value(&self, c: f64) -> f64 {
        let bias: f64 = self
            .terms
            .iter()
            .filter(|t| t.l2 > c)
            .map(|t| (1.0 - c / t.l2) * t.l1)
            .sum();
        bias + c * self.noise_mass
    }

    /// A subgradient of `G` at `c` (the right derivative).
    pub fn subgradient(&self, c: f64) -> f64 {
        self.noise_mass - self.suffix_ratio_sum(c)
    }

    /// `sum over users with l2 > c of l1/l2` — the quantity the optimality
    /// condition compares against the noise mass.
    pub fn suffix_ratio_sum(&self, c: f64) -> f64 {
        self.terms.iter().filter(|t| t.l2 > c).map(|t| t.ratio).sum()
    }

    /// Smallest `C >= 0` with `suffix_ratio_sum(C) <= M`, found by one
    /// descending pass over the sorted norms. This is a minimizer of `G`:
    /// the suffix sum is exactly the magnitude of the bias slope, so the
    /// condition says the noise slope has caught up with it.
    pub fn minimize(&self) -> f64 {
        let mut remaining: f64 = self.terms.iter().map(|t| t.ratio).sum();
        if remaining <= self.noise_mass {
            return 0.0;
        }
        let mut i = 0;
        while i < self.terms.len() {
            let v = self.terms[i].l2;
            while i < self.terms.len() && self.terms[i].l2 == v {
                remaining -= self.terms[i].ratio;
                i += 1;
            }
            if remaining <= self.noise_mass {
                return v;
            }
        }
        // Unreachable: the suffix past the largest norm is empty.
        self.terms.last().map(|t| t.l2).unwrap_or(0.0)
    }

    /// Exact minimizer of the regularized per-user objective
    /// `F(C) = G(C)/n + (lambda/2) C^2` over `C >= 0`.
    ///
    /// `F` is strongly convex and piecewise-quadratic with breakpoints at the
    /// distinct l2 norms, so the global minimum is the best clamped vertex
    /// over the segments — an O(n log n) scan, no iteration or tolerance.
    pub fn minimize_regularized(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        let n = self.n as f64;
        // Distinct breakpoints with per-group (ratio, l1) sums.
        let mut groups: Vec<(f64, f64, f64)> = Vec::new();
        for t in &self.terms {
            match groups.last_mut() {
                Some((v, r, l)) if *v == t.l2 => {
                    *r += t.ratio;
                    *l += t.l1;
                }
                _ => groups.push((t.l2, t.ratio, t.l1)),
            }
        }
        let mut best_c = 0.0;
        let mut best_f = f64::INFINITY;
        // Active sums over users with l2 >= the segment's upper breakpoint.
        let mut active_ratio: f64 = groups.iter().map(|g| g.1).sum();
        let mut active_l1: f64 = groups.iter().map(|g| g.2).sum();
        let mut lo = 0.0;
        for j in 0..=groups.len() {
            let hi = if j < groups.len() { groups[j].0 } else { f64::INFINITY };
            // On [lo, hi]: F(c) = (active_l1 - c*active_ratio + c*M)/n + lambda c^2 / 2.
            let vertex = (active_ratio - self.noise_mass) / (n * lambda);
            let c = vertex.clamp(lo, hi);
            let f = (active_l1 - c * active_ratio + c * self.noise_mass) / n
                + 0.5 * lambda * c * c;
            if f < best_f {
                best_f = f;
                best_c = c;
            }
            if j < groups.len() {
                active_ratio -= groups[j].1;
                active_l1 -= groups[j].2;
                lo = groups[j].0;
            }
        }
        Ok(best_c)
    }
}

/// `G(C)` for a dataset without building a reusable [`SurrogateLoss`].
pub fn surrogate_loss(dataset: &Dataset, noise_mass: f64, c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::invalid("c", format!("must be nonnegative, got {c}")));
    }
    Ok(SurrogateLoss::new(dataset, noise_mass)?.value(c))
}

/// Threshold rule for the Laplace mechanism: the `ceil(d/epsilon)`-th largest
/// total contribution `m_i = ||N_i||_1`. Non-private; its expected loss is
/// within a factor two of the best threshold.
pub fn laplace_quantile_threshold(
    dataset: &Dataset,
    d: usize,
    epsilon: f64,
) -> Result<ThresholdEstimate> {
    if d == 0 {
        return Err(Error::invalid("d", "must be positive"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    let rank = (d as f64 / epsilon).ceil() as usize;
    let rank = rank.max(1);
    if rank > dataset.len() {
        return Err(Error::NotEnoughUsers { need: rank, have: dataset.len() });
    }
    let mut sizes: Vec<f64> = dataset.users().iter().map(|u| u.l1()).collect();
    sizes.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(
        ThresholdEstimate::new(sizes[rank - 1], ThresholdMethod::LaplaceQuantile, PrivacyParams::none())
            .with("rank", rank as f64),
    )
}

/// Exact optimal threshold for the Gaussian release: the smallest `C >= 0`
/// whose suffix ratio sum is at most the noise mass. Non-private.
pub fn exact_gaussian_threshold(dataset: &Dataset, noise_mass: f64) -> Result<ThresholdEstimate> {
    let loss = SurrogateLoss::new(dataset, noise_mass)?;
    let c = loss.minimize();
    Ok(ThresholdEstimate::new(c, ThresholdMethod::ExactGaussian, PrivacyParams::none())
        .with("surrogate_value", loss.value(c))
        .with("suffix_ratio_sum", loss.suffix_ratio_sum(c)))
}

/// Tuning for the private quantile tracker.
#[derive(Debug, Clone, Copy)]
pub struct QuantileConfig {
    /// Starting threshold.
    pub initial_c: f64,
    /// Base learning rate; step `t` uses `eta_0 / sqrt(t)`. The decay both
    /// reaches distant quantiles early and shrinks the terminal oscillation
    /// band below typical test tolerances.
    pub eta0: f64,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        QuantileConfig { initial_c: 1.0, eta0: 0.5 }
    }
}

/// Private quantile tracker: multiplicatively walks `C` until roughly
/// `target_rank` users sit above it. Each of the `steps` rounds compares a
/// noisy below-fraction against the target quantile `q = 1 - target_rank/n`
/// and updates `C <- C * exp(-eta_t (b~ - q))`. Spends `budget.epsilon`
/// split evenly across rounds (pure DP; the budget's delta is not consumed).
pub fn dp_quantile_threshold(
    dataset: &Dataset,
    target_rank: f64,
    budget: &PrivacyParams,
    steps: usize,
    source: &mut RandomSource,
) -> Result<ThresholdEstimate> {
    dp_quantile_threshold_with(dataset, target_rank, budget, steps, &QuantileConfig::default(), source)
}

pub fn dp_quantile_threshold_with(
    dataset: &Dataset,
    target_rank: f64,
    budget: &PrivacyParams,
    steps: usize,
    config: &QuantileConfig,
    source: &mut RandomSource,
) -> Result<ThresholdEstimate> {
    let sizes: Vec<f64> = dataset.users().iter().map(|u| u.l1()).collect();
    dp_quantile_scalar(&sizes, target_rank, budget, steps, config, source)
}

/// The quantile tracker over an arbitrary per-user scalar (the histogram
/// form uses total contribution sizes; the count experiments use raw
/// per-user counts).
pub fn dp_quantile_scalar(
    values: &[f64],
    target_rank: f64,
    budget: &PrivacyParams,
    steps: usize,
    config: &QuantileConfig,
    source: &mut RandomSource,
) -> Result<ThresholdEstimate> {
    let n = values.len() as f64;
    if !(target_rank > 0.0) || target_rank >= n {
        return Err(Error::invalid(
            "target_rank",
            format!("must lie in (0, n={n}), got {target_rank}"),
        ));
    }
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if !(config.initial_c > 0.0) || !(config.eta0 >= 0.0) {
        return Err(Error::invalid("config", "initial_c must be positive and eta0 nonnegative"));
    }
    let q = 1.0 - target_rank / n;
    let eps_step = budget.epsilon / steps as f64;
    // Below-fraction has replacement sensitivity 1/n.
    let noise_scale = 1.0 / (n * eps_step);
    let mut c = config.initial_c;
    for t in 1..=steps {
        let below = values.iter().filter(|&&m| m <= c).count() as f64 / n;
        let noisy = below + source.sample_laplace(noise_scale, 1)?[0];
        let eta = config.eta0 / (t as f64).sqrt();
        c *= (-eta * (noisy - q)).exp();
    }
    let spent = PrivacyParams { epsilon: budget.epsilon, delta: 0.0 };
    let final_below = values.iter().filter(|&&m| m <= c).count() as f64 / n;
    Ok(ThresholdEstimate::new(c, ThresholdMethod::DpQuantile, spent)
        .with("target_q", q)
        .with("steps", steps as f64)
        .with("step_noise_scale", noise_scale)
        .with("final_below_fraction", final_below))
}

/// Tuning for the DP-SGD threshold estimator. The per-step noise level is
/// `noise_multiplier * 2 sqrt(2 s T ln(1.25/delta)) / (n epsilon)`, an
/// advanced-composition calibration for `T` subsampled steps of sensitivity
/// `2 sqrt(s) / n`; the multiplier is exposed because the underlying
/// optimizer's constants are a matter of accounting convention.
#[derive(Debug, Clone, Copy)]
pub struct DpSgdConfig {
    /// Iteration count; defaults to `min(n^2, 10^4)`.
    pub steps: Option<usize>,
    pub noise_multiplier: f64,
    /// Starting point; defaults to `c_max / 2`.
    pub initial_c: Option<f64>,
}

impl Default for DpSgdConfig {
    fn default() -> Self {
        DpSgdConfig { steps: None, noise_multiplier: 1.0, initial_c: None }
    }
}

/// Private SGD on `G(C)/n` over `[0, c_max]` with per-sample slopes capped at
/// `sqrt(sparsity)`. Returns the average of the last half of the projected
/// iterates. Spends the full `(epsilon, delta)` budget.
pub fn dpsgd_threshold(
    dataset: &Dataset,
    noise_mass: f64,
    c_max: f64,
    sparsity: f64,
    budget: &PrivacyParams,
    source: &mut RandomSource,
) -> Result<ThresholdEstimate> {
    dpsgd_threshold_with(dataset, noise_mass, c_max, sparsity, budget, &DpSgdConfig::default(), source)
}

pub fn dpsgd_threshold_with(
    dataset: &Dataset,
    noise_mass: f64,
    c_max: f64,
    sparsity: f64,
    budget: &PrivacyParams,
    config: &DpSgdConfig,
    source: &mut RandomSource,
) -> Result<ThresholdEstimate> {
    if !(c_max > 0.0) || !c_max.is_finite() {
        return Err(Error::invalid("c_max", format!("must be positive, got {c_max}")));
    }
    if budget.delta <= 0.0 {
        return Err(Error::invalid("budget", "dpsgd requires delta > 0 for its composition"));
    }
    if !(sparsity >= 1.0) || !sparsity.is_finite() {
        return Err(Error::invalid("sparsity", format!("must be >= 1, got {sparsity}")));
    }
    if !(noise_mass > 0.0) || !noise_mass.is_finite() {
        return Err(Error::invalid("noise_mass", format!("must be positive, got {noise_mass}")));
    }
    let n = dataset.len() as f64;
    let steps = config.steps.unwrap_or_else(|| {
        let n2 = dataset.len().saturating_mul(dataset.len());
        n2.clamp(1, 10_000)
    });
    let sqrt_s = sparsity.sqrt();
    let sigma_step = config.noise_multiplier
        * 2.0
        * (2.0 * sparsity * steps as f64 * (1.25 / budget.delta).ln()).sqrt()
        / (n * budget.epsilon);
    // Per-user slopes, capped; index-aligned with l2 norms for sampling.
    let user_terms: Vec<(f64, f64)> = dataset
        .users()
        .iter()
        .map(|u| {
            if u.l2() > 0.0 {
                (u.l2(), (u.l1() / u.l2()).min(sqrt_s))
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    let drift = noise_mass / n;
    let mut c = config.initial_c.unwrap_or(c_max / 2.0).clamp(0.0, c_max);
    let mut tail_sum = 0.0;
    let tail_start = steps / 2; // average over the last half of the iterates
    let mut tail_count = 0usize;
    for t in 1..=steps {
        let (l2, ratio) = user_terms[source.gen_range(0..user_terms.len())];
        let sample_slope = if c < l2 { -ratio } else { 0.0 };
        let noise = if sigma_step > 0.0 { source.sample_gaussian(sigma_step, 1)?[0] } else { 0.0 };
        let grad = sample_slope + drift + noise;
        let eta = c_max / (sqrt_s * (t as f64).sqrt());
        c = (c - eta * grad).clamp(0.0, c_max);
        if t > tail_start {
            tail_sum += c;
            tail_count += 1;
        }
    }
    let averaged = tail_sum / tail_count as f64;
    Ok(ThresholdEstimate::new(averaged, ThresholdMethod::DpSgd, *budget)
        .with("steps", steps as f64)
        .with("step_noise_sigma", sigma_step)
        .with("c_max", c_max))
}

/// Output perturbation: minimizes the strongly-convex
/// `F(C) = G(C)/n + (lambda/2) C^2` exactly, then adds Laplace noise scaled
/// to the minimizer's sensitivity `4 sqrt(s)/(lambda n)`. Pure
/// `(epsilon_prime, 0)`-DP. The result is clamped into `[0, c_max]`
/// (post-processing; `c_max` is by assumption an upper bound on the optimum).
pub fn output_perturbation_threshold(
    dataset: &Dataset,
    noise_mass: f64,
    c_max: f64,
    sparsity: f64,
    epsilon_prime: f64,
    source: &mut RandomSource,
) -> Result<ThresholdEstimate> {
    if !(c_max > 0.0) || !c_max.is_finite() {
        return Err(Error::invalid("c_max", format!("must be positive, got {c_max}")));
    }
    if !(epsilon_prime > 0.0) || !epsilon_prime.is_finite() {
        return Err(Error::invalid("epsilon_prime", format!("must be positive, got {epsilon_prime}")));
    }
    let n = dataset.len() as f64;
    let lambda = 2.0 * (2.0 * sparsity).sqrt() / (c_max * (n * epsilon_prime).sqrt());
    let sensitivity = threshold_sensitivity(lambda, sparsity, dataset.len())?;
    let loss = SurrogateLoss::with_ratio_cap(dataset, noise_mass, sparsity)?;
    let c_regularized = loss.minimize_regularized(lambda)?;
    let noise = source.sample_laplace(sensitivity / epsilon_prime, 1)?[0];
    let c = (c_regularized + noise).clamp(0.0, c_max);
    let spent = PrivacyParams { epsilon: epsilon_prime, delta: 0.0 };
    Ok(ThresholdEstimate::new(c, ThresholdMethod::OutputPerturbation, spent)
        .with("lambda", lambda)
        .with("sensitivity", sensitivity)
        .with("c_regularized", c_regularized)
        .with("noise_scale", sensitivity / epsilon_prime))
}

/// How far the regularized minimizer can move when one user is replaced:
/// `4 sqrt(s) / (lambda n)`.
pub fn threshold_sensitivity(lambda: f64, sparsity: f64, n: usize) -> Result<f64> {
    if !(lambda > 0.0) || !(sparsity > 0.0) || n == 0 {
        return Err(Error::invalid("lambda/sparsity/n", "all must be positive"));
    }
    Ok(4.0 * sparsity.sqrt() / (lambda * n as f64))
}
