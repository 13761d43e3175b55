//! Metric and summary output: CSV rows, a run summary JSON, and
//! machine-readable error reports.
//!
//! Floats are rendered with Rust's shortest round-trip formatting, so
//! re-running the same config yields byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds::BoundConstants;
use crate::objective::Certificate;

use super::fit::RateFit;
use super::{ExperimentConfig, HarnessError, MetricsRow, ResolvedExperiment};

/// Exact header of the metrics CSV.
pub const METRICS_HEADER: &str =
    "trial,t,graph_id,gap_max,gap_mean,consensus_error,min_y,bound,ratio";

/// Render rows to CSV. Mean-over-trials rows carry `mean` in the trial
/// column and an empty graph id; graph ids are 1-based on disk.
pub fn format_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let trial = match row.trial {
            Some(m) => m.to_string(),
            None => "mean".to_string(),
        };
        let graph = match row.graph_id {
            Some(b) => (b + 1).to_string(),
            None => String::new(),
        };
        out.push_str(&format!(
            "{trial},{t},{graph},{gap_max},{gap_mean},{cons},{min_y},{bound},{ratio}\n",
            t = row.t,
            gap_max = row.gap_max,
            gap_mean = row.gap_mean,
            cons = row.consensus_error,
            min_y = row.min_y,
            bound = row.bound,
            ratio = row.ratio,
        ));
    }
    out
}

/// Write the metrics CSV to any sink.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> std::io::Result<()> {
    out.write_all(format_metrics_csv(rows).as_bytes())
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    line: usize,
    path: &Path,
) -> Result<T, HarnessError> {
    field.parse().map_err(|_| {
        HarnessError::InvalidConfig(format!(
            "{}:{line}: cannot parse field {field:?}",
            path.display()
        ))
    })
}

/// Read a metrics CSV produced by [`write_metrics_csv`] (for the `fit`
/// command and round-trip tests).
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        _ => {
            return Err(HarnessError::InvalidConfig(format!(
                "{}: missing metrics header {METRICS_HEADER:?}",
                path.display()
            )));
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(HarnessError::InvalidConfig(format!(
                "{}:{line_no}: expected 9 fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        let trial = if fields[0] == "mean" {
            None
        } else {
            Some(parse_field(fields[0], line_no, path)?)
        };
        let graph_id = if fields[2].is_empty() {
            None
        } else {
            let one_based: usize = parse_field(fields[2], line_no, path)?;
            if one_based == 0 {
                return Err(HarnessError::InvalidConfig(format!(
                    "{}:{line_no}: graph ids start at 1",
                    path.display()
                )));
            }
            Some(one_based - 1)
        };
        rows.push(MetricsRow {
            trial,
            t: parse_field(fields[1], line_no, path)?,
            graph_id,
            gap_max: parse_field(fields[3], line_no, path)?,
            gap_mean: parse_field(fields[4], line_no, path)?,
            consensus_error: parse_field(fields[5], line_no, path)?,
            min_y: parse_field(fields[6], line_no, path)?,
            bound: parse_field(fields[7], line_no, path)?,
            ratio: parse_field(fields[8], line_no, path)?,
        });
    }
    Ok(rows)
}

/// Everything a reader needs to interpret a metrics file, serialized as
/// `summary.json` next to it.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub n: usize,
    pub dim: usize,
    /// Ensemble-derived constants (gate threshold, window, `c1`, and the
    /// contraction factor as `ln(1 - lambda)`); absent for single-node
    /// networks.
    pub constants: Option<BoundConstants>,
    /// Centralized optimum used as the gap reference; absent when no
    /// objective was configured.
    pub certificate: Option<Certificate>,
    /// Log-log rate fit over all checkpoints, when one is possible.
    pub rate_fit: Option<RateFit>,
    pub checkpoints: Vec<u64>,
    pub rows: usize,
}

/// Assemble the summary for a finished run.
pub fn build_summary(
    exp: &ResolvedExperiment,
    rows: &[MetricsRow],
    rate_fit: Option<RateFit>,
) -> RunSummary {
    RunSummary {
        config: exp.config.clone(),
        n: exp.ensemble.n(),
        dim: exp.x0.first().map(|x| x.len()).unwrap_or(0),
        constants: exp.constants.clone(),
        certificate: exp.certificate.clone(),
        rate_fit,
        checkpoints: exp.checkpoints.clone(),
        rows: rows.len(),
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}

/// Write `metrics.csv` and `summary.json` into `out_dir` (created if
/// missing); returns both paths.
pub fn write_outputs(
    out_dir: &Path,
    rows: &[MetricsRow],
    summary: &RunSummary,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let metrics_path = out_dir.join("metrics.csv");
    std::fs::write(&metrics_path, format_metrics_csv(rows)).map_err(io_err(&metrics_path))?;
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, render_json(summary)).map_err(io_err(&summary_path))?;
    Ok((metrics_path, summary_path))
}

/// One-line JSON error report for the CLI: `{"error":{"kind":...,"message":...}}`.
pub fn error_report(err: &HarnessError) -> String {
    let report = serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
        }
    });
    format!("{report}\n")
}
