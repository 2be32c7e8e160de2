//! Report files: `report.csv` with one row per method label and
//! `report.categories.json` with the error-category breakdown.

use super::aggregate::AggregateMetrics;
use super::ledger::ErrorCategory;
use num_traits::Float;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_CATEGORIES: &str = "report.categories.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("nothing to report")]
    Empty,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    method_label: String,
    runs_total: usize,
    runs_failed: usize,
    fully_correct_runs: usize,
    mean_errors: String,
    sd_errors: String,
    mean_loc: String,
    mean_duration_seconds: String,
    /// Per-requirement means joined with `;`.
    requirement_means: String,
    requirement_total: String,
    mean_replaced_functions: String,
    errors_fatal: usize,
    errors_runtime: usize,
    errors_content: usize,
    errors_missing_additional: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CategoryEntry {
    method_label: String,
    category_counts: BTreeMap<ErrorCategory, usize>,
}

/// Three decimal places; blank when absent.
pub fn fmt3<S: Float>(v: Option<S>) -> String {
    v.and_then(|x| x.to_f64())
        .map(|x| format!("{x:.3}"))
        .unwrap_or_default()
}

fn row<S: Float>(m: &AggregateMetrics<S>) -> ReportRow {
    let count = |c| m.category_counts.get(&c).copied().unwrap_or(0);
    ReportRow {
        method_label: m.method_label.clone(),
        runs_total: m.runs_total,
        runs_failed: m.runs_failed,
        fully_correct_runs: m.fully_correct_runs,
        mean_errors: fmt3(m.mean_errors),
        sd_errors: fmt3(m.sd_errors),
        mean_loc: fmt3(m.mean_loc),
        mean_duration_seconds: fmt3(m.mean_duration_seconds),
        requirement_means: m
            .requirement_means
            .as_ref()
            .map(|ms| {
                ms.iter()
                    .map(|&x| fmt3(Some(x)))
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default(),
        requirement_total: fmt3(m.requirement_total),
        mean_replaced_functions: fmt3(m.mean_replaced_functions),
        errors_fatal: count(ErrorCategory::Fatal),
        errors_runtime: count(ErrorCategory::Runtime),
        errors_content: count(ErrorCategory::Content),
        errors_missing_additional: count(ErrorCategory::MissingAdditional),
    }
}

/// The CSV header and the row for `m`, as written to `report.csv`.
pub fn render_row<S: Float>(m: &AggregateMetrics<S>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row(m)).expect("in-memory csv write");
    String::from_utf8(w.into_inner().expect("flush in-memory csv")).expect("csv is utf-8")
}

pub fn emit_report<S: Float>(
    metrics: &[AggregateMetrics<S>],
    out_dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), ReportError> {
    if metrics.is_empty() {
        return Err(ReportError::Empty);
    }
    let out_dir = out_dir.as_ref();
    let csv_path = out_dir.join(REPORT_CSV);
    let json_path = out_dir.join(REPORT_CATEGORIES);
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| ReportError::Io { path, source }
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    for m in metrics {
        w.serialize(row(m)).expect("in-memory csv write");
    }
    let bytes = w.into_inner().expect("flush in-memory csv");
    std::fs::write(&csv_path, bytes).map_err(io(&csv_path))?;

    let categories: Vec<CategoryEntry> = metrics
        .iter()
        .map(|m| CategoryEntry {
            method_label: m.method_label.clone(),
            category_counts: m.category_counts.clone(),
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&categories).expect("categories serialize");
    json.push('\n');
    std::fs::write(&json_path, json).map_err(io(&json_path))?;
    Ok((csv_path, json_path))
}

fn parse_opt(path: &Path, s: &str) -> Result<Option<f64>, ReportError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| ReportError::Format {
        path: path.display().to_string(),
        message: format!("not a number: {s:?}"),
    })
}

/// Reads a report back (values carry the 3-decimal rounding of the file).
pub fn load_report(dir: impl AsRef<Path>) -> Result<Vec<AggregateMetrics<f64>>, ReportError> {
    let dir = dir.as_ref();
    let csv_path = dir.join(REPORT_CSV);
    let json_path = dir.join(REPORT_CATEGORIES);
    let format = |p: &Path, message: String| ReportError::Format {
        path: p.display().to_string(),
        message,
    };

    let json = std::fs::read_to_string(&json_path).map_err(|source| ReportError::Io {
        path: json_path.display().to_string(),
        source,
    })?;
    let categories: Vec<CategoryEntry> =
        serde_json::from_str(&json).map_err(|e| format(&json_path, e.to_string()))?;
    let categories: BTreeMap<String, BTreeMap<ErrorCategory, usize>> = categories
        .into_iter()
        .map(|c| (c.method_label, c.category_counts))
        .collect();

    let mut rdr =
        csv::Reader::from_path(&csv_path).map_err(|e| format(&csv_path, e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<ReportRow>() {
        let r = rec.map_err(|e| format(&csv_path, e.to_string()))?;
        let requirement_means = if r.requirement_means.is_empty() {
            None
        } else {
            Some(
                r.requirement_means
                    .split(';')
                    .map(|s| parse_opt(&csv_path, s).map(|v| v.unwrap_or(0.0)))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        };
        out.push(AggregateMetrics {
            category_counts: categories.get(&r.method_label).cloned().unwrap_or_default(),
            mean_errors: parse_opt(&csv_path, &r.mean_errors)?,
            sd_errors: parse_opt(&csv_path, &r.sd_errors)?,
            mean_loc: parse_opt(&csv_path, &r.mean_loc)?,
            mean_duration_seconds: parse_opt(&csv_path, &r.mean_duration_seconds)?,
            requirement_means,
            requirement_total: parse_opt(&csv_path, &r.requirement_total)?,
            mean_replaced_functions: parse_opt(&csv_path, &r.mean_replaced_functions)?,
            method_label: r.method_label,
            runs_total: r.runs_total,
            runs_failed: r.runs_failed,
            fully_correct_runs: r.fully_correct_runs,
        });
    }
    Ok(out)
}
