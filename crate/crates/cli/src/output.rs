//! Atomic file output: write to a temporary sibling, then rename, so an
//! interrupted run never leaves a partially written artifact at the target
//! path.

use std::fs;
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    path.with_file_name(format!(".{}.tmp{}", name, std::process::id()))
}

/// Runs `write` against a temporary path, then renames it over `path`.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&Path) -> CliResult<()>,
) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = temp_sibling(path);
    match write(&tmp).and_then(|()| fs::rename(&tmp, path).map_err(CliError::from)) {
        Ok(()) => Ok(()),
        Err(err) => {
            let _ = fs::remove_file(&tmp);
            Err(err)
        }
    }
}

/// Serializes `value` as pretty JSON into `path`, atomically.
pub fn write_json_atomic<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let body = serde_json::to_string_pretty(value)?;
    write_atomic(path, |tmp| {
        fs::write(tmp, body.as_bytes()).map_err(CliError::from)
    })
}

/// Serializes an iterator of records as CSV into `path`, atomically.
pub fn write_csv_atomic<T: serde::Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    write_atomic(path, |tmp| {
        let mut writer = csv::Writer::from_path(tmp).map_err(histdp::Error::from)?;
        for row in rows {
            writer.serialize(row).map_err(histdp::Error::from)?;
        }
        writer.flush()?;
        Ok(())
    })
}

/// Writes pre-rendered lines (e.g. JSONL) into `path`, atomically.
pub fn write_lines_atomic(path: &Path, lines: &[String]) -> CliResult<()> {
    write_atomic(path, |tmp| {
        let mut body = lines.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(tmp, body.as_bytes()).map_err(CliError::from)
    })
}

/// Sample standard deviation (n-1 denominator), 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}
