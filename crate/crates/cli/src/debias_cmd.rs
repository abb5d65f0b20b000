//! `histdp debias`: paired clipped-vs-debiased estimation of single-item
//! counts, with per-trial records and a compact summary table.

use serde::Serialize;

use histdp::data::load_dataset;
use histdp::debias::{clip_release_1d, debias_release};
use histdp::threshold::{dp_quantile_scalar, QuantileConfig};
use histdp::{GeneratorKind, PoissonClipModel, PrivacyParams, RandomSource, SyntheticSpec};

use crate::output::{sample_std, write_lines_atomic};
use crate::{resolve_seed, CliError, CliResult, DebiasArgs};

#[derive(Serialize)]
struct EstimatorRecord {
    total: f64,
    rate: f64,
    loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    clamped: Option<bool>,
}

#[derive(Serialize)]
struct TrialRecord {
    trial: usize,
    c: u32,
    seed: u64,
    clip: EstimatorRecord,
    debias: EstimatorRecord,
}

enum Truth {
    /// Synthetic: squared error of the rate estimate against the mean rate.
    MeanRate(f64),
    /// Ingested: relative error of the total against the exact sum.
    Total(f64),
}

impl Truth {
    fn losses(&self, n: usize, clip_total: f64, debias_total: f64, debias_rate: f64) -> (f64, f64) {
        match *self {
            Truth::MeanRate(lambda_bar) => (
                (clip_total / n as f64 - lambda_bar).powi(2),
                (debias_rate - lambda_bar).powi(2),
            ),
            Truth::Total(total) => (
                (clip_total - total).abs() / total,
                (debias_total - total).abs() / total,
            ),
        }
    }
}

fn positive(name: &str, value: f64) -> CliResult<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(CliError::usage(format!("--{name} must be positive, got {value}")));
    }
    Ok(())
}

pub fn run(args: DebiasArgs) -> CliResult<()> {
    positive("eps", args.eps)?;
    positive("eps-prime", args.eps_prime)?;
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if let Some(c) = args.c {
        if c == 0 {
            return Err(CliError::usage("--c must be at least 1"));
        }
    }
    let seed = resolve_seed(args.seed)?;

    // Materialize the count source: fixed counts from a file, or rates to
    // redraw Poisson counts from each trial.
    let (fixed_counts, rates, truth) = match (&args.input, args.synth_n) {
        (Some(path), _) => {
            let format = crate::resolve_format(args.format, path);
            let data = load_dataset(path, format, args.top_d)?;
            if data.domain() != 1 {
                return Err(CliError::Runtime(format!(
                    "debias needs single-item data; got domain {} (hint: --top-d 1)",
                    data.domain()
                )));
            }
            let mut counts: Vec<u64> = data.users().iter().map(|u| u.get(0)).collect();
            // Zero-count users cannot appear in the file but matter to the
            // debiasing model; --n restores them as explicit zeros.
            if let Some(population) = args.n {
                if population < counts.len() {
                    return Err(CliError::Runtime(format!(
                        "--n {population} is below the {} users present in the file",
                        counts.len()
                    )));
                }
                counts.resize(population, 0);
            }
            let total: u64 = counts.iter().sum();
            if total == 0 {
                return Err(CliError::Runtime("ingested counts sum to zero".to_string()));
            }
            (Some(counts), None, Truth::Total(total as f64))
        }
        (None, Some(n)) => {
            let alpha =
                args.alpha.ok_or_else(|| CliError::usage("--synth-n requires --alpha"))?;
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(CliError::usage(format!("--alpha must be positive, got {alpha}")));
            }
            if n == 0 {
                return Err(CliError::usage("--synth-n must be at least 1"));
            }
            let spec = SyntheticSpec {
                generator: GeneratorKind::PoissonDirichlet,
                n,
                d: 1,
                alpha: Some(alpha),
                total_mass: args.mass,
                size_law: None,
                seed,
            };
            let (_, rates) = spec.generate()?;
            let rates = rates.expect("poisson-dirichlet yields rates");
            let lambda_bar = rates.iter().sum::<f64>() / rates.len() as f64;
            (None, Some(rates), Truth::MeanRate(lambda_bar))
        }
        (None, None) => unreachable!("clap enforces the data group"),
    };
    let n = fixed_counts.as_ref().map(Vec::len).or(rates.as_ref().map(Vec::len)).unwrap();

    let master = RandomSource::new(seed);
    let mut records = Vec::with_capacity(args.trials);
    for trial in 0..args.trials {
        let mut source = master.substream(trial as u64);
        let trial_seed = source.seed();
        let counts: Vec<u64> = match (&fixed_counts, &rates) {
            (Some(counts), _) => counts.clone(),
            (None, Some(rates)) => histdp::data::poisson_counts(rates, &mut source)?,
            _ => unreachable!(),
        };
        let c = match args.c {
            Some(c) => c,
            None => {
                // Private top-ceil(1/eps) count under the threshold budget.
                let rank = (1.0 / args.eps).ceil().max(1.0);
                let values: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
                let budget = PrivacyParams::new(args.eps_prime, 0.0)
                    .map_err(|e| CliError::usage(e.to_string()))?;
                let est = dp_quantile_scalar(
                    &values,
                    rank,
                    &budget,
                    50,
                    &QuantileConfig::default(),
                    &mut source,
                )?;
                (est.c.ceil().max(1.0) as u32).max(1)
            }
        };
        let mut model = PoissonClipModel::new(c, n, args.eps)?;
        if args.no_rate_clamp {
            model = model.without_rate_clamp();
        }
        // The debiased estimate post-processes the same noisy sum as the
        // clipped one: a cloned stream realizes identical noise.
        let mut paired = source.clone();
        let y = clip_release_1d(&counts, c as f64, args.eps, &mut source)?;
        let est = debias_release(&counts, &model, &mut paired)?;
        let (clip_loss, debias_loss) = truth.losses(n, y, est.total_hat, est.rate_hat);
        records.push(TrialRecord {
            trial,
            c,
            seed: trial_seed,
            clip: EstimatorRecord { total: y, rate: y / n as f64, loss: clip_loss, clamped: None },
            debias: EstimatorRecord {
                total: est.total_hat,
                rate: est.rate_hat,
                loss: debias_loss,
                clamped: Some(est.clamped),
            },
        });
    }

    if let Some(out) = &args.out {
        let lines = records
            .iter()
            .map(|r| serde_json::to_string(r).map_err(CliError::from))
            .collect::<CliResult<Vec<_>>>()?;
        write_lines_atomic(out, &lines)?;
    }

    let clip_losses: Vec<f64> = records.iter().map(|r| r.clip.loss).collect();
    let debias_losses: Vec<f64> = records.iter().map(|r| r.debias.loss).collect();
    println!("method,avg_loss,std");
    for (method, losses) in [("clip", &clip_losses), ("debias", &debias_losses)] {
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        println!("{method},{mean},{}", sample_std(losses));
    }
    Ok(())
}
