//! `histdp synth`: synthetic dataset generation with a JSON sidecar echoing
//! the generating spec and the realized ground truth.

use serde::Serialize;

use histdp::data::write_dataset;
use histdp::{GeneratorKind, SizeLaw, SyntheticSpec};

use crate::output::{write_atomic, write_json_atomic};
use crate::{resolve_seed, CliError, CliResult, GenArg, LawArg, SynthArgs};

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a SyntheticSpec,
    users: usize,
    domain: usize,
    total_count: u64,
    /// Mean Poisson rate (ground truth), when the generator defines one.
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_rate: Option<f64>,
    version: &'static str,
}

fn check_absent(name: &str, present: bool, generator: &str) -> CliResult<()> {
    if present {
        Err(CliError::usage(format!("--{name} does not apply to --gen {generator}")))
    } else {
        Ok(())
    }
}

fn build_spec(args: &SynthArgs, seed: u64) -> CliResult<SyntheticSpec> {
    let (generator, alpha, total_mass, size_law) = match args.gen {
        GenArg::PoissonDirichlet => {
            let alpha = args
                .alpha
                .ok_or_else(|| CliError::usage("--gen poisson-dirichlet requires --alpha"))?;
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(CliError::usage(format!(
                    "--alpha must be positive, got {alpha}"
                )));
            }
            if let Some(mass) = args.mass {
                if !(mass > 0.0) || !mass.is_finite() {
                    return Err(CliError::usage(format!("--mass must be positive, got {mass}")));
                }
            }
            check_absent("law", args.law.is_some(), "poisson-dirichlet")?;
            check_absent("exponent", args.exponent.is_some(), "poisson-dirichlet")?;
            check_absent("mu", args.mu.is_some(), "poisson-dirichlet")?;
            check_absent("sigma", args.sigma.is_some(), "poisson-dirichlet")?;
            if args.d != 1 {
                return Err(CliError::usage(format!(
                    "--gen poisson-dirichlet is single-item; got --d {}",
                    args.d
                )));
            }
            (GeneratorKind::PoissonDirichlet, Some(alpha), args.mass, None)
        }
        GenArg::HeavyTail => {
            check_absent("alpha", args.alpha.is_some(), "heavy-tail")?;
            check_absent("mass", args.mass.is_some(), "heavy-tail")?;
            let law = match args.law {
                Some(LawArg::Zipf) => {
                    check_absent("mu", args.mu.is_some(), "heavy-tail --law zipf")?;
                    check_absent("sigma", args.sigma.is_some(), "heavy-tail --law zipf")?;
                    let exponent = args
                        .exponent
                        .ok_or_else(|| CliError::usage("--law zipf requires --exponent"))?;
                    if !(exponent > 1.0) {
                        return Err(CliError::usage(format!(
                            "--exponent must exceed 1, got {exponent}"
                        )));
                    }
                    SizeLaw::Zipf { exponent }
                }
                Some(LawArg::LogNormal) => {
                    check_absent("exponent", args.exponent.is_some(), "heavy-tail --law log-normal")?;
                    let mu = args
                        .mu
                        .ok_or_else(|| CliError::usage("--law log-normal requires --mu"))?;
                    let sigma = args
                        .sigma
                        .ok_or_else(|| CliError::usage("--law log-normal requires --sigma"))?;
                    if !(sigma > 0.0) || !sigma.is_finite() {
                        return Err(CliError::usage(format!(
                            "--sigma must be positive, got {sigma}"
                        )));
                    }
                    SizeLaw::LogNormal { mu, sigma }
                }
                None => return Err(CliError::usage("--gen heavy-tail requires --law")),
            };
            (GeneratorKind::HeavyTail, None, None, Some(law))
        }
    };
    if args.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    Ok(SyntheticSpec {
        generator,
        n: args.n,
        d: args.d,
        alpha,
        total_mass,
        size_law,
        seed,
    })
}

pub fn run(args: SynthArgs) -> CliResult<()> {
    let seed = resolve_seed(args.seed)?;
    let spec = build_spec(&args, seed)?;
    let (dataset, rates) = spec.generate()?;
    let format = crate::resolve_format(args.format, &args.out);

    write_atomic(&args.out, |tmp| {
        write_dataset(&dataset, tmp, format).map_err(CliError::from)
    })?;

    let total_count: u64 =
        dataset.users().iter().map(|u| u.entries().map(|(_, c)| c).sum::<u64>()).sum();
    let sidecar = Sidecar {
        spec: &spec,
        users: dataset.len(),
        domain: dataset.domain(),
        total_count,
        mean_rate: rates.map(|r| r.iter().sum::<f64>() / r.len() as f64),
        version: env!("CARGO_PKG_VERSION"),
    };
    let sidecar_path = {
        let mut name = args
            .out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        name.push_str(".spec.json");
        args.out.with_file_name(name)
    };
    write_json_atomic(&sidecar_path, &sidecar)?;

    println!(
        "{}",
        serde_json::json!({
            "dataset": args.out,
            "sidecar": sidecar_path,
            "users": dataset.len(),
            "domain": dataset.domain(),
            "seed": seed,
        })
    );
    Ok(())
}
