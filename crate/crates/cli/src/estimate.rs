//! `histdp estimate`: choose a clipping threshold with the requested method,
//! release the histogram under the release budget, and report the full
//! accounting as one JSON record.

use std::collections::BTreeMap;

use serde::Serialize;

use histdp::clip::{release_gaussian, release_laplace};
use histdp::data::load_dataset;
use histdp::model::{aggregate, relative_loss};
use histdp::threshold::{
    dp_quantile_threshold, dpsgd_threshold, exact_gaussian_threshold, laplace_quantile_threshold,
    noise_coefficient, output_perturbation_threshold,
};
use histdp::{Dataset, NoisyEstimate, PrivacyParams, RandomSource, ThresholdEstimate};

use crate::output::write_json_atomic;
use crate::{resolve_seed, CliError, CliResult, EstimateArgs, MethodArg};

#[derive(Serialize)]
struct Budget {
    epsilon: f64,
    delta: f64,
}

impl From<PrivacyParams> for Budget {
    fn from(p: PrivacyParams) -> Budget {
        Budget { epsilon: p.epsilon, delta: p.delta }
    }
}

#[derive(Serialize)]
struct Ledger {
    threshold_spent: Budget,
    release_spent: Budget,
    total_spent: Budget,
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    method: &'a str,
    users: usize,
    domain: usize,
    c: f64,
    /// Threshold actually used by the release (clamped away from 0).
    release_threshold: f64,
    noise: &'a str,
    noise_scale: f64,
    relative_loss: f64,
    diagnostics: &'a BTreeMap<String, f64>,
    ledger: Ledger,
    /// Flags that fell back to their documented defaults.
    defaulted: &'a [String],
    warnings: &'a [String],
    seed: u64,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    released_path: Option<&'a std::path::Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<&'a [f64]>,
}

fn positive(name: &str, value: f64) -> CliResult<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(CliError::usage(format!("--{name} must be positive, got {value}")));
    }
    Ok(())
}

struct ResolvedBudgets {
    release: PrivacyParams,
    threshold_epsilon: f64,
    threshold_delta: f64,
    defaulted: Vec<String>,
}

fn resolve_budgets(args: &EstimateArgs, n: usize) -> CliResult<ResolvedBudgets> {
    positive("eps", args.eps)?;
    positive("eps-prime", args.eps_prime)?;
    let mut defaulted = Vec::new();
    let default_delta = 1.0 / (2.0 * n as f64);

    let delta = match args.delta {
        Some(d) => d,
        None => {
            defaulted.push("delta".to_string());
            if args.method == MethodArg::LaplaceQuantile {
                0.0
            } else {
                default_delta
            }
        }
    };
    match args.method {
        MethodArg::LaplaceQuantile if delta != 0.0 => {
            return Err(CliError::usage(format!(
                "laplace-quantile releases with pure-DP Laplace noise; pass --delta 0 (got {delta})"
            )));
        }
        MethodArg::LaplaceQuantile => {}
        _ if delta <= 0.0 => {
            return Err(CliError::usage(format!(
                "the gaussian release needs --delta > 0, got {delta}"
            )));
        }
        _ => {}
    }
    let release = PrivacyParams::new(args.eps, delta)
        .map_err(|e| CliError::usage(e.to_string()))?;

    let threshold_delta = match args.delta_prime {
        Some(d) if d < 0.0 => {
            return Err(CliError::usage(format!("--delta-prime must be nonnegative, got {d}")));
        }
        Some(d) => d,
        None => match args.method {
            MethodArg::Dpsgd => {
                defaulted.push("delta-prime".to_string());
                default_delta
            }
            _ => 0.0,
        },
    };
    match args.method {
        MethodArg::Dpsgd if threshold_delta == 0.0 => {
            return Err(CliError::usage("dpsgd needs --delta-prime > 0"));
        }
        MethodArg::OutputPerturb if threshold_delta != 0.0 => {
            return Err(CliError::usage(format!(
                "output-perturb is pure-DP; --delta-prime must be 0, got {threshold_delta}"
            )));
        }
        _ => {}
    }

    Ok(ResolvedBudgets { release, threshold_epsilon: args.eps_prime, threshold_delta, defaulted })
}

fn estimate_threshold(
    args: &EstimateArgs,
    data: &Dataset,
    budgets: &ResolvedBudgets,
    defaulted: &mut Vec<String>,
    source: &mut RandomSource,
) -> CliResult<ThresholdEstimate> {
    let d = data.domain();
    let m = noise_coefficient(d, &budgets.release);
    let need_cm = || {
        CliError::usage(format!(
            "--cm is required for --method {}",
            if args.method == MethodArg::Dpsgd { "dpsgd" } else { "output-perturb" }
        ))
    };
    let sparsity = match args.s {
        Some(s) => {
            positive("s", s)?;
            s
        }
        None => {
            if matches!(args.method, MethodArg::Dpsgd | MethodArg::OutputPerturb) {
                defaulted.push("s".to_string());
            }
            (0.1 * d as f64).max(1.0)
        }
    };
    let est = match args.method {
        MethodArg::Exact => exact_gaussian_threshold(data, m)?,
        MethodArg::LaplaceQuantile => laplace_quantile_threshold(data, d, args.eps)?,
        MethodArg::DpQuantile => {
            let budget = PrivacyParams::new(budgets.threshold_epsilon, 0.0)
                .map_err(|e| CliError::usage(e.to_string()))?;
            // Track the norm whose rank matches the noise mass: the exact
            // rule stops once at most that much ratio weight lies above C.
            dp_quantile_threshold(data, m, &budget, args.steps, source)?
        }
        MethodArg::Dpsgd => {
            let cm = args.cm.ok_or_else(need_cm)?;
            positive("cm", cm)?;
            let budget =
                PrivacyParams::new(budgets.threshold_epsilon, budgets.threshold_delta)
                    .map_err(|e| CliError::usage(e.to_string()))?;
            dpsgd_threshold(data, m, cm, sparsity, &budget, source)?
        }
        MethodArg::OutputPerturb => {
            let cm = args.cm.ok_or_else(need_cm)?;
            positive("cm", cm)?;
            output_perturbation_threshold(
                data,
                m,
                cm,
                sparsity,
                budgets.threshold_epsilon,
                source,
            )?
        }
    };
    Ok(est)
}

pub fn run(args: EstimateArgs) -> CliResult<()> {
    let seed = resolve_seed(args.seed)?;
    let format = crate::resolve_format(args.format, &args.input);
    let data = load_dataset(&args.input, format, args.top_d)?;
    let budgets = resolve_budgets(&args, data.len())?;
    let mut defaulted = budgets.defaulted.clone();

    let mut source = RandomSource::new(seed);
    let est = estimate_threshold(&args, &data, &budgets, &mut defaulted, &mut source)?;

    // A threshold of exactly zero would make the release degenerate; keep
    // the released clip strictly positive (pure noise around zero).
    let release_threshold = est.c.max(1e-12);
    let released: NoisyEstimate = match args.method {
        MethodArg::LaplaceQuantile => {
            release_laplace(&data, release_threshold, &budgets.release, &mut source)?
        }
        _ => release_gaussian(&data, release_threshold, &budgets.release, &mut source)?,
    };

    let truth = aggregate(&data);
    let loss = relative_loss(&released.values, &truth)?;
    let noise_name = match released.noise {
        histdp::NoiseKind::Laplace => "laplace",
        histdp::NoiseKind::Gaussian => "gaussian",
    };

    if let Some(out) = &args.out {
        write_json_atomic(out, &released)?;
    }
    let record = EstimateRecord {
        method: est.method.name(),
        users: data.len(),
        domain: data.domain(),
        c: est.c,
        release_threshold,
        noise: noise_name,
        noise_scale: released.noise_scale,
        relative_loss: loss,
        diagnostics: &est.diagnostics,
        ledger: Ledger {
            threshold_spent: est.budget_spent.into(),
            release_spent: released.budget_spent.into(),
            total_spent: est.budget_spent.compose(&released.budget_spent).into(),
        },
        defaulted: &defaulted,
        warnings: &released.warnings,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        released_path: args.out.as_deref(),
        values: if args.out.is_none() { Some(&released.values) } else { None },
    };
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}
