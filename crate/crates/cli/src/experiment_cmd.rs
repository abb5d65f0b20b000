//! `histdp experiment`: run a sweep described by a JSON config and write the
//! per-trial and summary CSVs atomically.

use std::fs;

use histdp::experiment::{
    run_count_experiment, run_histogram_experiment, summarize, CountExperimentConfig,
    ExperimentConfig, TrialResult,
};

use crate::output::write_csv_atomic;
use crate::{explicit_seed, CliError, CliResult, ExperimentArgs};

pub fn run(args: ExperimentArgs) -> CliResult<()> {
    let raw = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.config.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.config.display())))?;
    let kind = match &mut value {
        serde_json::Value::Object(map) => map
            .remove("kind")
            .map(|k| match k {
                serde_json::Value::String(s) => Ok(s),
                other => Err(CliError::Runtime(format!(
                    "config field \"kind\" must be a string, got {other}"
                ))),
            })
            .transpose()?
            .unwrap_or_else(|| "histogram".to_string()),
        _ => {
            return Err(CliError::Runtime("config must be a JSON object".to_string()));
        }
    };
    let seed_override = explicit_seed(args.seed)?;

    let results: Vec<TrialResult> = match kind.as_str() {
        "histogram" => {
            let mut config: ExperimentConfig = serde_json::from_value(value)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", args.config.display())))?;
            if let Some(seed) = seed_override {
                config.seed = seed;
            }
            run_histogram_experiment(&config)?
        }
        "count" => {
            let mut config: CountExperimentConfig = serde_json::from_value(value)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", args.config.display())))?;
            if let Some(seed) = seed_override {
                config.seed = seed;
            }
            run_count_experiment(&config)?
        }
        other => {
            return Err(CliError::Runtime(format!(
                "config field \"kind\" must be \"histogram\" or \"count\", got \"{other}\""
            )));
        }
    };
    let summary = summarize(&results)?;

    let summary_path = args.summary.clone().unwrap_or_else(|| {
        let mut name = args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "results".to_string());
        name.push_str(".summary.csv");
        args.out.with_file_name(name)
    });
    write_csv_atomic(&args.out, &results)?;
    write_csv_atomic(&summary_path, &summary)?;

    println!(
        "{}",
        serde_json::json!({
            "kind": kind,
            "results": args.out,
            "rows": results.len(),
            "summary": summary_path,
            "summary_rows": summary.len(),
        })
    );
    Ok(())
}
