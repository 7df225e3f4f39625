//! Side-by-side comparison of run reports.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use fusionbed::metrics::{csv_row, MetricsReport, CSV_HEADER};
use fusionbed::scenario::RunReport;

use crate::artifacts::write_atomic;
use crate::{read_text, CliError};

pub const COMPARE_CSV: &str = "compare.csv";

type Getter = fn(&MetricsReport) -> Option<f64>;

const METRICS: [(&str, Getter); 10] = [
    ("precision", |m| m.precision),
    ("recall", |m| m.recall),
    ("mota", |m| m.mota),
    ("motp", |m| m.motp),
    ("id_switches", |m| Some(m.id_switches as f64)),
    ("det_precision", |m| m.det_precision),
    ("det_recall", |m| m.det_recall),
    ("ade", |m| m.ade),
    ("fde", |m| m.fde),
    ("ospa_mean", |m| m.ospa_mean),
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.6}"))
}

fn label(r: &RunReport) -> String {
    format!("{}/{}/{}", r.scenario.name, r.mode, r.seed)
}

/// Tab-separated table: one row per metric, each run's value, then the
/// delta of every later run against the first.
pub fn delta_table(reports: &[RunReport]) -> String {
    let mut out = String::from("metric");
    for r in reports {
        let _ = write!(out, "\t{}", label(r));
    }
    for r in &reports[1..] {
        let _ = write!(out, "\tdelta({})", label(r));
    }
    out.push('\n');
    for (name, get) in METRICS {
        out.push_str(name);
        let base = get(&reports[0].metrics);
        for r in reports {
            let _ = write!(out, "\t{}", cell(get(&r.metrics)));
        }
        for r in &reports[1..] {
            let d = match (get(&r.metrics), base) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            let _ = write!(out, "\t{}", cell(d));
        }
        out.push('\n');
    }
    out
}

pub fn compare(out: &Path, runs: &[PathBuf]) -> Result<String, CliError> {
    if runs.len() < 2 {
        return Err(CliError::Invalid(format!("compare needs at least 2 reports, got {}", runs.len())));
    }
    let mut reports = Vec::new();
    for path in runs {
        let text = read_text(path)?;
        let r: RunReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: not a run report: {e}", path.display())))?;
        reports.push(r);
    }
    let mut csv = format!("{CSV_HEADER}\n");
    for r in &reports {
        csv.push_str(&csv_row(&r.scenario.name, &r.mode, r.seed, &r.metrics));
        csv.push('\n');
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write_atomic(out, COMPARE_CSV, &csv)?;
    Ok(delta_table(&reports))
}
