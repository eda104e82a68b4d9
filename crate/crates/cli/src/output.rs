//! CSV time series and JSON verdict files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{Report, SeriesRecord, Verdict};

pub const SERIES_FILE: &str = "series.csv";
pub const VERDICT_FILE: &str = "verdicts.json";

/// Columns every series file starts with.
pub const BASE_COLUMNS: [&str; 7] = ["t", "D", "rate_predicted", "rate_measured", "fisher", "mass_tilde", "mass"];

/// Contents of the verdict file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictFile {
    pub kind: String,
    pub pass: bool,
    pub verdicts: Vec<Verdict>,
}

impl VerdictFile {
    pub fn from_report(report: &Report) -> Self {
        Self { kind: report.kind.name().to_string(), pass: report.passed(), verdicts: report.verdicts.clone() }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn header(report: &Report) -> Vec<String> {
    BASE_COLUMNS.iter().chain(&report.extra_columns).map(|c| c.to_string()).collect()
}

fn row(r: &SeriesRecord) -> Vec<String> {
    [Some(r.t), r.d, r.rate_predicted, r.rate_measured, r.fisher, r.mass_tilde, r.mass]
        .into_iter()
        .map(cell)
        .chain(r.extra.iter().map(|&x| format_float(x)))
        .collect()
}

/// Writes `series.csv` and `verdicts.json` into `dir`, creating it if needed.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let series_path = dir.join(SERIES_FILE);
    let csv_err = |source| CliError::Csv { path: series_path.clone(), source };
    let mut w = csv::Writer::from_path(&series_path).map_err(csv_err)?;
    w.write_record(header(report)).map_err(csv_err)?;
    for r in &report.series {
        w.write_record(row(r)).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io { path: series_path.clone(), source })?;

    let verdict_path = dir.join(VERDICT_FILE);
    write_json(&VerdictFile::from_report(report), &verdict_path)?;
    Ok((series_path, verdict_path))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
