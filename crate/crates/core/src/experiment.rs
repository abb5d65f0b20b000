//! Reproducible experiment harness.
//!
//! Two experiment shapes cover the evaluation protocols:
//!
//! * **Histogram experiments** sweep clipping-threshold methods and domain
//!   sizes, releasing the clipped aggregate with Gaussian noise and scoring
//!   the relative l1 loss against the exact aggregate.
//! * **Count experiments** compare the plain clipped estimate against the
//!   debiased one on single-item Poisson counts, with the clip threshold
//!   chosen privately per trial and the two estimators fed identical noise.
//!
//! Every trial draws from its own sub-stream of the master seed, so results
//! are bit-identical across reruns and independent of the parallelism
//! degree. A per-trial budget ledger asserts that the privacy spend equals
//! the declared split.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::release_gaussian;
use crate::data::{load_dataset, poisson_counts, FileFormat, GeneratorKind, SyntheticSpec};
use crate::debias::{clip_release_1d, debias_release, PoissonClipModel};
use crate::error::{Error, Result};
use crate::model::{aggregate, relative_loss, BudgetSplit, Dataset, PrivacyParams};
use crate::noise::RandomSource;
use crate::threshold::{
    dp_quantile_scalar, dp_quantile_threshold, dpsgd_threshold, exact_gaussian_threshold,
    noise_coefficient, output_perturbation_threshold, QuantileConfig, ThresholdMethod,
};

/// One trial's outcome. `(method, d, alpha, trial_index)` is unique per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: String,
    pub d: usize,
    /// Dirichlet concentration for sweep cells; `None` outside sweeps.
    pub alpha: Option<f64>,
    pub c_used: f64,
    /// Relative l1 loss (histogram), squared rate error (synthetic counts),
    /// or relative count error (ingested counts); always nonnegative.
    pub loss: f64,
    pub trial_index: usize,
    /// Seed of the trial's random sub-stream.
    pub seed: u64,
}

/// Where the experiment data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    File {
        path: PathBuf,
        format: FileFormat,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        top_d: Option<usize>,
    },
    Synthetic {
        spec: SyntheticSpec,
    },
}

impl DataSource {
    /// Loads or generates the dataset, with ground-truth rates when the
    /// generator defines them.
    pub fn materialize(&self) -> Result<(Dataset, Option<Vec<f64>>)> {
        match self {
            DataSource::File { path, format, top_d } => {
                Ok((load_dataset(path, *format, *top_d)?, None))
            }
            DataSource::Synthetic { spec } => spec.generate(),
        }
    }
}

fn default_threshold_epsilon() -> f64 {
    0.1
}

fn default_release_epsilon() -> f64 {
    1.0
}

fn default_trials() -> usize {
    20
}

fn default_quantile_steps() -> usize {
    50
}

fn default_true() -> bool {
    true
}

/// Budget split between threshold estimation and the release. Unset deltas
/// default to `1/(2n)` once the user count is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default = "default_threshold_epsilon")]
    pub threshold_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_delta: Option<f64>,
    #[serde(default = "default_release_epsilon")]
    pub release_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_delta: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            threshold_epsilon: default_threshold_epsilon(),
            threshold_delta: None,
            release_epsilon: default_release_epsilon(),
            release_delta: None,
        }
    }
}

impl BudgetConfig {
    pub fn resolve(&self, n: usize) -> Result<BudgetSplit> {
        if n == 0 {
            return Err(Error::invalid("n", "cannot resolve a budget for zero users"));
        }
        let default_delta = 1.0 / (2.0 * n as f64);
        Ok(BudgetSplit {
            threshold: PrivacyParams::new(
                self.threshold_epsilon,
                self.threshold_delta.unwrap_or(default_delta),
            )?,
            release: PrivacyParams::new(
                self.release_epsilon,
                self.release_delta.unwrap_or(default_delta),
            )?,
        })
    }
}

/// Per-trial privacy accounting: the trial declares its spend up front,
/// every mechanism's reported spend is charged, and [`settle`](Self::settle)
/// fails the trial if the two disagree.
#[derive(Debug, Clone, Copy)]
pub struct BudgetLedger {
    declared: PrivacyParams,
    spent: PrivacyParams,
}

impl BudgetLedger {
    pub fn new(declared: PrivacyParams) -> Self {
        BudgetLedger { declared, spent: PrivacyParams::none() }
    }

    pub fn charge(&mut self, spend: PrivacyParams) {
        self.spent = self.spent.compose(&spend);
    }

    /// Checks spent == declared (to float tolerance) and returns the spend.
    pub fn settle(self) -> Result<PrivacyParams> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        if close(self.spent.epsilon, self.declared.epsilon)
            && close(self.spent.delta, self.declared.delta)
        {
            Ok(self.spent)
        } else {
            Err(Error::BudgetMismatch(format!(
                "declared ({}, {}) but spent ({}, {})",
                self.declared.epsilon, self.declared.delta, self.spent.epsilon, self.spent.delta
            )))
        }
    }
}

/// Histogram-experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    #[serde(default)]
    pub budget: BudgetConfig,
    pub methods: Vec<ThresholdMethod>,
    /// Domain sizes to sweep (top-`d` restriction); empty means the full
    /// domain.
    #[serde(default)]
    pub d_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on the threshold for the two box-constrained methods;
    /// when unset, half the threshold budget buys a private top-size
    /// estimate used as the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_max: Option<f64>,
    /// Sparsity cap `s` for the private methods; defaults to `0.1 * d`
    /// (at least 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default = "default_quantile_steps")]
    pub quantile_steps: usize,
}

/// Declared privacy spend of one histogram trial: what the ledger must see.
pub fn declared_histogram_budget(
    method: ThresholdMethod,
    split: &BudgetSplit,
    c_max_given: bool,
) -> Result<PrivacyParams> {
    let t = split.threshold;
    let threshold_spend = match method {
        ThresholdMethod::ExactGaussian => PrivacyParams::none(),
        ThresholdMethod::DpQuantile => PrivacyParams { epsilon: t.epsilon, delta: 0.0 },
        ThresholdMethod::DpSgd => {
            if c_max_given {
                t
            } else {
                // Half on the box estimate (pure), half on the method.
                PrivacyParams { epsilon: t.epsilon, delta: t.delta }
            }
        }
        ThresholdMethod::OutputPerturbation => PrivacyParams { epsilon: t.epsilon, delta: 0.0 },
        ThresholdMethod::LaplaceQuantile => {
            return Err(Error::invalid(
                "methods",
                "laplace-quantile pairs with the Laplace release, not this experiment",
            ));
        }
    };
    Ok(threshold_spend.compose(&split.release))
}

fn check_method_budget(method: ThresholdMethod, split: &BudgetSplit) -> Result<()> {
    match method {
        ThresholdMethod::OutputPerturbation if split.threshold.delta != 0.0 => {
            Err(Error::BudgetMismatch(format!(
                "output-perturb is a pure-DP method; set threshold_delta = 0 explicitly \
                 (got {})",
                split.threshold.delta
            )))
        }
        ThresholdMethod::DpSgd if split.threshold.delta == 0.0 => Err(Error::BudgetMismatch(
            "dpsgd composes with a nonzero threshold_delta; got 0".into(),
        )),
        _ => Ok(()),
    }
}

/// Runs the threshold-method sweep on the configured data source.
pub fn run_histogram_experiment(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    let (dataset, _) = config.source.materialize()?;
    run_histogram_experiment_on(&dataset, config)
}

/// As [`run_histogram_experiment`] but on an already-materialized dataset.
pub fn run_histogram_experiment_on(
    dataset: &Dataset,
    config: &ExperimentConfig,
) -> Result<Vec<TrialResult>> {
    if config.trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if config.methods.is_empty() {
        return Err(Error::invalid("methods", "must name at least one method"));
    }
    let split = config.budget.resolve(dataset.len())?;
    for &method in &config.methods {
        // Also rejects laplace-quantile up front.
        declared_histogram_budget(method, &split, config.c_max.is_some())?;
        check_method_budget(method, &split)?;
    }
    let d_values =
        if config.d_values.is_empty() { vec![dataset.domain()] } else { config.d_values.clone() };
    let restricted = d_values
        .iter()
        .map(|&d| {
            if d == 0 || d > dataset.domain() {
                Err(Error::invalid(
                    "d_values",
                    format!("d = {d} outside [1, {}]", dataset.domain()),
                ))
            } else if d < dataset.domain() {
                dataset.restrict_top_d(d)
            } else {
                Ok(dataset.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let master = RandomSource::new(config.seed);
    let n_methods = config.methods.len();
    let cells: Vec<(usize, usize, usize)> = (0..d_values.len())
        .flat_map(|di| {
            (0..n_methods).flat_map(move |mi| (0..config.trials).map(move |t| (di, mi, t)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(di, mi, t)| {
            let stream = ((di * n_methods + mi) * config.trials + t) as u64;
            let mut source = master.substream(stream);
            let seed = source.seed();
            let method = config.methods[mi];
            let (c_used, loss) =
                run_histogram_trial(&restricted[di], method, &split, config, &mut source)?;
            Ok(TrialResult {
                method: method.name().to_string(),
                d: d_values[di],
                alpha: None,
                c_used,
                loss,
                trial_index: t,
                seed,
            })
        })
        .collect()
}

fn run_histogram_trial(
    data: &Dataset,
    method: ThresholdMethod,
    split: &BudgetSplit,
    config: &ExperimentConfig,
    source: &mut RandomSource,
) -> Result<(f64, f64)> {
    let d = data.domain();
    let m = noise_coefficient(d, &split.release);
    let mut ledger =
        BudgetLedger::new(declared_histogram_budget(method, split, config.c_max.is_some())?);
    let estimate = match method {
        ThresholdMethod::ExactGaussian => exact_gaussian_threshold(data, m)?,
        ThresholdMethod::DpQuantile => {
            dp_quantile_threshold(data, m, &split.threshold, config.quantile_steps, source)?
        }
        ThresholdMethod::DpSgd | ThresholdMethod::OutputPerturbation => {
            let sparsity = config.sparsity.unwrap_or((0.1 * d as f64).max(1.0));
            let (c_max, method_budget) = match config.c_max {
                Some(c) => (c, split.threshold),
                None => {
                    // Spend half the threshold budget on a private top-size
                    // estimate to serve as the box bound.
                    let half = PrivacyParams {
                        epsilon: split.threshold.epsilon / 2.0,
                        delta: 0.0,
                    };
                    let sizes: Vec<f64> = data.users().iter().map(|u| u.l1()).collect();
                    let box_est = dp_quantile_scalar(
                        &sizes,
                        1.0,
                        &half,
                        config.quantile_steps,
                        &QuantileConfig::default(),
                        source,
                    )?;
                    ledger.charge(box_est.budget_spent);
                    let remaining = PrivacyParams {
                        epsilon: split.threshold.epsilon / 2.0,
                        delta: split.threshold.delta,
                    };
                    (box_est.c.max(1e-6), remaining)
                }
            };
            match method {
                ThresholdMethod::DpSgd => {
                    dpsgd_threshold(data, m, c_max, sparsity, &method_budget, source)?
                }
                _ => output_perturbation_threshold(
                    data,
                    m,
                    c_max,
                    sparsity,
                    method_budget.epsilon,
                    source,
                )?,
            }
        }
        ThresholdMethod::LaplaceQuantile => unreachable!("rejected during validation"),
    };
    ledger.charge(estimate.budget_spent);
    // A zero threshold still releases (pure noise around zero): clamp to the
    // smallest positive clip the release accepts.
    let release = release_gaussian(data, estimate.c.max(1e-12), &split.release, source)?;
    ledger.charge(release.budget_spent);
    ledger.settle()?;
    let truth = aggregate(data);
    let loss = relative_loss(&release.values, &truth)?;
    Ok((estimate.c, loss))
}

/// Count-experiment configuration (single-item data, clip vs debias).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountExperimentConfig {
    pub source: DataSource,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Sweep of Dirichlet concentrations (synthetic sources only); each
    /// value regenerates the rates under a derived seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_values: Option<Vec<f64>>,
    /// Clamp debiased rates into [0, 1] (the bounded-rate regime).
    #[serde(default = "default_true")]
    pub clamp_rate: bool,
    #[serde(default = "default_quantile_steps")]
    pub quantile_steps: usize,
    /// Fixed integer clip threshold; when unset, each trial estimates the
    /// top-`ceil(1/epsilon)` count privately with the threshold budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_c: Option<u32>,
    /// Total user count behind an ingested file, including users with zero
    /// counts — the triple format cannot carry them, yet they are informative
    /// for the debiasing model. Pads the count vector with zeros up to this
    /// size. File sources only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
}

/// Declared privacy spend of one count trial. The clipped and debiased
/// estimates share a single noise draw (the debiased one post-processes the
/// same noisy sum), so the release is charged once.
pub fn declared_count_budget(split: &BudgetSplit, auto_c: bool) -> PrivacyParams {
    let release = PrivacyParams { epsilon: split.release.epsilon, delta: 0.0 };
    if auto_c {
        PrivacyParams { epsilon: split.threshold.epsilon, delta: 0.0 }.compose(&release)
    } else {
        release
    }
}

/// Runs paired clip/debias trials; emits two `TrialResult`s (methods
/// `"clip"` and `"debias"`) per trial.
pub fn run_count_experiment(config: &CountExperimentConfig) -> Result<Vec<TrialResult>> {
    if config.trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    match &config.source {
        DataSource::Synthetic { spec } => {
            if spec.generator != GeneratorKind::PoissonDirichlet {
                return Err(Error::invalid(
                    "source",
                    "count experiments need poisson-dirichlet synthetic data or a file",
                ));
            }
            if config.population.is_some() {
                return Err(Error::invalid(
                    "population",
                    "applies to file sources only; synthetic data already carries its zero counts",
                ));
            }
            let alphas: Vec<Option<f64>> = match &config.alpha_values {
                Some(values) if !values.is_empty() => values.iter().copied().map(Some).collect(),
                Some(_) => return Err(Error::invalid("alpha_values", "must be nonempty when set")),
                None => vec![None],
            };
            let spec_master = RandomSource::new(spec.seed);
            let mut all = Vec::new();
            for (a_idx, alpha) in alphas.iter().enumerate() {
                let cell_spec = SyntheticSpec {
                    alpha: alpha.or(spec.alpha),
                    ..spec.clone()
                };
                // One rate draw per sweep cell, fresh counts per trial.
                let (_, rates) =
                    cell_spec.generate_seeded(spec_master.substream(a_idx as u64).seed())?;
                let rates = rates.expect("poisson-dirichlet always yields rates");
                let lambda_bar = rates.iter().sum::<f64>() / rates.len() as f64;
                let results = run_count_cell(
                    config,
                    a_idx,
                    alpha.or(spec.alpha),
                    CountTruth::MeanRate(lambda_bar),
                    CountsPerTrial::Fresh(&rates),
                )?;
                all.extend(results);
            }
            Ok(all)
        }
        source @ DataSource::File { .. } => {
            let (dataset, _) = source.materialize()?;
            if dataset.domain() != 1 {
                return Err(Error::invalid(
                    "source",
                    format!(
                        "count experiments need single-item data; got domain {} (hint: top_d = 1)",
                        dataset.domain()
                    ),
                ));
            }
            let mut counts: Vec<u64> = dataset.users().iter().map(|u| u.get(0)).collect();
            if let Some(population) = config.population {
                if population < counts.len() {
                    return Err(Error::invalid(
                        "population",
                        format!(
                            "{population} is below the {} users present in the file",
                            counts.len()
                        ),
                    ));
                }
                counts.resize(population, 0);
            }
            let total: u64 = counts.iter().sum();
            if total == 0 {
                return Err(Error::InvalidDataset("ingested counts sum to zero".into()));
            }
            run_count_cell(
                config,
                0,
                None,
                CountTruth::Total(total as f64),
                CountsPerTrial::Fixed(&counts),
            )
        }
    }
}

enum CountTruth {
    /// Synthetic ground truth: squared error of the rate estimate.
    MeanRate(f64),
    /// Ingested ground truth: relative error of the total-count estimate.
    Total(f64),
}

enum CountsPerTrial<'a> {
    /// Redraw Poisson counts from these rates every trial.
    Fresh(&'a [f64]),
    /// Reuse these counts every trial (only the noise varies).
    Fixed(&'a [u64]),
}

fn run_count_cell(
    config: &CountExperimentConfig,
    a_idx: usize,
    alpha: Option<f64>,
    truth: CountTruth,
    counts_source: CountsPerTrial<'_>,
) -> Result<Vec<TrialResult>> {
    let n = match counts_source {
        CountsPerTrial::Fresh(rates) => rates.len(),
        CountsPerTrial::Fixed(counts) => counts.len(),
    };
    let split = config.budget.resolve(n)?;
    let master = RandomSource::new(config.seed);
    let trials: Vec<usize> = (0..config.trials).collect();
    let nested: Vec<[TrialResult; 2]> = trials
        .into_par_iter()
        .map(|t| {
            let mut source = master.substream((a_idx * config.trials + t) as u64);
            let seed = source.seed();
            let counts: Vec<u64> = match counts_source {
                CountsPerTrial::Fresh(rates) => poisson_counts(rates, &mut source)?,
                CountsPerTrial::Fixed(counts) => counts.to_vec(),
            };
            let (clip_loss, debias_loss, c_used) =
                run_count_trial(&counts, config, &split, &truth, &mut source)?;
            let mk = |method: &str, loss: f64| TrialResult {
                method: method.to_string(),
                d: 1,
                alpha,
                c_used,
                loss,
                trial_index: t,
                seed,
            };
            Ok([mk("clip", clip_loss), mk("debias", debias_loss)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn run_count_trial(
    counts: &[u64],
    config: &CountExperimentConfig,
    split: &BudgetSplit,
    truth: &CountTruth,
    source: &mut RandomSource,
) -> Result<(f64, f64, f64)> {
    let n = counts.len();
    let mut ledger = BudgetLedger::new(declared_count_budget(split, config.fixed_c.is_none()));
    let c = match config.fixed_c {
        Some(c) => {
            if c == 0 {
                return Err(Error::invalid("fixed_c", "must be at least 1"));
            }
            c
        }
        None => {
            // Private top-ceil(1/eps) count, rounded up to an integer clip.
            let rank = (1.0 / split.release.epsilon).ceil().max(1.0);
            let values: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
            let quantile = dp_quantile_scalar(
                &values,
                rank,
                &PrivacyParams { epsilon: split.threshold.epsilon, delta: 0.0 },
                config.quantile_steps,
                &QuantileConfig::default(),
                source,
            )?;
            ledger.charge(quantile.budget_spent);
            (quantile.c.ceil().max(1.0) as u32).max(1)
        }
    };
    let mut model = PoissonClipModel::new(c, n, split.release.epsilon)?;
    if !config.clamp_rate {
        model = model.without_rate_clamp();
    }
    // Identical noise: the debiased estimate post-processes the same noisy
    // sum the plain release produces, realized by a cloned source.
    let mut paired = source.clone();
    let y = clip_release_1d(counts, c as f64, split.release.epsilon, source)?;
    let est = debias_release(counts, &model, &mut paired)?;
    ledger.charge(est.budget_spent);
    ledger.settle()?;
    let (clip_loss, debias_loss) = match truth {
        CountTruth::MeanRate(lambda_bar) => (
            (y / n as f64 - lambda_bar).powi(2),
            (est.rate_hat - lambda_bar).powi(2),
        ),
        CountTruth::Total(total) => (
            (y - total).abs() / total,
            (est.total_hat - total).abs() / total,
        ),
    };
    Ok((clip_loss, debias_loss, c as f64))
}

/// Per-cell summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub d: usize,
    pub alpha: Option<f64>,
    pub mean_loss: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single trial.
    pub std_loss: f64,
    pub trials: usize,
    /// Set when the cell has too few trials for a standard deviation.
    pub degenerate: bool,
}

/// Groups results by `(method, d, alpha)` and reports mean, sample standard
/// deviation, and trial count per cell, in deterministic order.
pub fn summarize(results: &[TrialResult]) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(Error::InvalidDataset("no trial results to summarize".into()));
    }
    let mut cells: BTreeMap<(String, usize, Option<u64>), Vec<f64>> = BTreeMap::new();
    for r in results {
        cells
            .entry((r.method.clone(), r.d, r.alpha.map(f64::to_bits)))
            .or_default()
            .push(r.loss);
    }
    Ok(cells
        .into_iter()
        .map(|((method, d, alpha_bits), losses)| {
            let k = losses.len();
            let mean = losses.iter().sum::<f64>() / k as f64;
            let std = if k >= 2 {
                (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                d,
                alpha: alpha_bits.map(f64::from_bits),
                mean_loss: mean,
                std_loss: std,
                trials: k,
                degenerate: k < 2,
            }
        })
        .collect())
}
